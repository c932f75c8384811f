#pragma once

#include <stdexcept>
#include <string>

namespace pathfid {

/// Base error for the library. `module()` names the component that raised
/// it so the CLI can report provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

}  // namespace pathfid
