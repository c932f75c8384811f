#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "pathfid/error.hpp"
#include "pathfid/markers.hpp"
#include "pathfid/text.hpp"

namespace pathfid::minifid {

/// Word-level vocabulary. Ids 0..3 are <pad>, <bos>, <eos>, <unk>; the
/// marker inventory follows, then corpus words in first-seen order.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Tokenizer() { reset_reserved(); }

  explicit Tokenizer(const std::vector<std::string>& vocab) {
    if (vocab.size() < 4 || vocab[0] != "<pad>" || vocab[1] != "<bos>" || vocab[2] != "<eos>" || vocab[3] != "<unk>")
      throw Error("minifid", "vocabulary must start with <pad> <bos> <eos> <unk>");
    for (const auto& t : vocab) add(t);
    if (index_.size() != vocab.size()) throw Error("minifid", "vocabulary contains duplicate tokens");
  }

  template <typename Range>
  static Tokenizer build(const Range& token_lists) {
    Tokenizer t;
    for (const auto& toks : token_lists)
      for (const auto& tok : toks) t.add(tok);
    return t;
  }

  void add(const std::string& tok) {
    if (index_.emplace(tok, static_cast<int>(vocab_.size())).second) vocab_.push_back(tok);
  }

  int id(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& tok) const { return index_.count(tok) > 0; }

  const std::string& token(int id) const { return vocab_.at(static_cast<std::size_t>(id)); }

  std::vector<int> encode(const Tokens& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  /// Stops at <eos>; drops <pad> and <bos>.
  Tokens decode(const std::vector<int>& ids) const {
    Tokens out;
    for (int i : ids) {
      if (i == kEos) break;
      if (i == kPad || i == kBos) continue;
      out.push_back(token(i));
    }
    return out;
  }

  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }

 private:
  void reset_reserved() {
    vocab_.clear();
    index_.clear();
    for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
    for (const auto& m : MarkerVocabulary::standard().all()) add(m);
  }

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace pathfid::minifid
