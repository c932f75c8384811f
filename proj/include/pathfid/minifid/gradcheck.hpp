#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pathfid/minifid/model.hpp"

namespace pathfid::minifid {

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Relative error with a floor on the denominator so entries whose true
/// gradient is ~0 are judged on absolute agreement.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares analytic gradients with central finite differences for every
/// entry of every tensor (or the first `max_entries` of each when non-zero).
inline GradCheckReport gradient_check(const ModelConfig& cfg, ModelParams params, const std::vector<TokenIds>& blocks,
                                      const TokenIds& target, double step = 1e-4, std::size_t max_entries = 0) {
  const LossAndGrads analytic = loss_and_grads(cfg, params, blocks, target);
  GradCheckReport report;
  for (auto& [name, tensor] : params) {
    TensorCheck tc;
    tc.name = name;
    const Mat& g = analytic.grads.at(name);
    const auto n = static_cast<std::size_t>(tensor.size());
    const std::size_t limit = max_entries == 0 ? n : std::min(n, max_entries);
    for (std::size_t i = 0; i < limit; ++i) {
      double& theta = tensor.data()[i];
      const double saved = theta;
      theta = saved + step;
      const double up = forward_loss(cfg, params, blocks, target);
      theta = saved - step;
      const double down = forward_loss(cfg, params, blocks, target);
      theta = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = g.data()[i];
      tc.max_abs_error = std::max(tc.max_abs_error, std::abs(a - numeric));
      tc.max_rel_error = std::max(tc.max_rel_error, relative_error(a, numeric));
    }
    tc.entries = limit;
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.tensors.push_back(tc);
  }
  return report;
}

}  // namespace pathfid::minifid
