#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "monet/core/param.hpp"
#include "monet/core/rng.hpp"

namespace monet {

struct GradCheckOptions {
  double eps = 1e-4;
  /// Coordinates sampled per block; blocks smaller than this are checked fully.
  std::size_t coords_per_block = 16;
  /// Gradients below this magnitude are compared in absolute terms.
  double abs_floor = 1e-7;
  std::uint64_t seed = 0;
};

/// Compares the gradients already accumulated in `blocks` against central
/// differences of `loss`. Returns the maximum relative deviation
/// |a - n| / max(|a|, |n|, abs_floor). Parameter values are restored.
inline double finite_diff_check(const std::function<double()>& loss, std::span<ParamBlock* const> blocks,
                                const GradCheckOptions& opts = {}) {
  RngStream rng(opts.seed, "gradcheck");
  double worst = 0.0;
  for (ParamBlock* block : blocks) {
    const auto size = static_cast<std::size_t>(block->size());
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (size > opts.coords_per_block) {
      rng.shuffle(coords);
      coords.resize(opts.coords_per_block);
    }
    for (std::size_t c : coords) {
      double& v = block->value.data()[c];
      const double saved = v;
      v = saved + opts.eps;
      const double up = loss();
      v = saved - opts.eps;
      const double down = loss();
      v = saved;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double analytic = block->grad.data()[c];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace monet
