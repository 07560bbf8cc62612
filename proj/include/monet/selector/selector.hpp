#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "monet/core/errors.hpp"
#include "monet/core/loss.hpp"
#include "monet/core/param.hpp"
#include "monet/core/rng.hpp"

namespace monet {

/// Softmax of the order logits, max-shifted.
inline std::vector<double> coefficients(std::span<const double> u) {
  if (u.empty()) {
    throw ArityError("coefficients: empty logits");
  }
  const double mx = *std::max_element(u.begin(), u.end());
  std::vector<double> pi(u.size());
  double sum = 0.0;
  for (std::size_t m = 0; m < u.size(); ++m) {
    pi[m] = std::exp(u[m] - mx);
    sum += pi[m];
  }
  for (double& p : pi) {
    p /= sum;
  }
  return pi;
}

/// Binary k-of-M mask over the order pool.
struct DropoutMask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
  bool operator[](std::size_t m) const { return bits[m] != 0; }

  std::vector<std::size_t> active() const {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < bits.size(); ++m) {
      if (bits[m] != 0) {
        out.push_back(m);
      }
    }
    return out;
  }

  static DropoutMask all(std::size_t m) { return DropoutMask{std::vector<std::uint8_t>(m, 1)}; }
};

/// Uniformly random subset of size k (partial Fisher-Yates).
inline DropoutMask sample_mask(std::size_t m, std::size_t k, RngStream& rng) {
  if (k < 1 || k > m) {
    throw ArityError("sample_mask: k = " + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
  }
  DropoutMask mask{std::vector<std::uint8_t>(m, 0)};
  if (k == m) {
    std::fill(mask.bits.begin(), mask.bits.end(), 1);
    return mask;
  }
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.index(m - i)]);
    mask.bits[idx[i]] = 1;
  }
  return mask;
}

/// Softmax restricted to the surviving orders; masked entries are exactly zero.
inline std::vector<double> masked_coefficients(std::span<const double> u, const DropoutMask& mask) {
  if (mask.size() != u.size()) {
    throw ArityError("masked_coefficients: mask length differs from logits");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < u.size(); ++m) {
    if (mask[m]) {
      mx = std::max(mx, u[m]);
    }
  }
  if (std::isinf(mx)) {
    throw StateError("masked_coefficients: degenerate all-zero mask");
  }
  std::vector<double> pi(u.size(), 0.0);
  double sum = 0.0;
  for (std::size_t m = 0; m < u.size(); ++m) {
    if (mask[m]) {
      pi[m] = std::exp(u[m] - mx);
      sum += pi[m];
    }
  }
  for (double& p : pi) {
    p /= sum;
  }
  return pi;
}

/// Probability that a given order survives a uniform k-of-M mask.
inline double presence_probability(std::size_t k, std::size_t m) {
  return static_cast<double>(k) / static_cast<double>(m);
}

/// Inference-time coefficients. Scaling every exp(u_m) by the presence
/// probability k/M cancels in the normalisation, leaving the plain softmax.
inline std::vector<double> inference_coefficients(std::span<const double> u, std::size_t /*k*/, std::size_t /*m*/) {
  return coefficients(u);
}

/// -log sum_m exp(log_weight_m - nll_m).
inline double mixture_nll(std::span<const double> order_nlls, std::span<const double> log_weights) {
  if (order_nlls.size() != log_weights.size()) {
    throw ArityError("mixture_nll: " + std::to_string(order_nlls.size()) + " losses vs " +
                     std::to_string(log_weights.size()) + " weights");
  }
  std::vector<double> terms(order_nlls.size());
  for (std::size_t m = 0; m < terms.size(); ++m) {
    terms[m] = log_weights[m] - order_nlls[m];
  }
  return -logsumexp(terms);
}

/// Analytic dL_i/du_m = pi_m (1 - exp(L_i - l_m)) for the softmax-parametrised mixture.
inline std::vector<double> selector_grad(std::span<const double> order_nlls, std::span<const double> pi) {
  if (order_nlls.size() != pi.size()) {
    throw ArityError("selector_grad: length mismatch");
  }
  std::vector<double> log_pi(pi.size());
  for (std::size_t m = 0; m < pi.size(); ++m) {
    log_pi[m] = std::log(pi[m]);
  }
  const double total = mixture_nll(order_nlls, log_pi);
  std::vector<double> g(pi.size());
  for (std::size_t m = 0; m < pi.size(); ++m) {
    g[m] = pi[m] == 0.0 ? 0.0 : pi[m] * (1.0 - std::exp(total - order_nlls[m]));
  }
  return g;
}

/// True while the order logits are frozen (epoch < n).
inline bool warmup_gate(long epoch, long warmup_epochs) { return epoch < warmup_epochs; }

enum class MaskGranularity { per_batch, per_example };

inline std::string to_string(MaskGranularity g) { return g == MaskGranularity::per_batch ? "batch" : "example"; }

/// Order logits and the selector's training knobs.
struct SelectorState {
  ParamBlock logits;  // 1 x M
  long warmup_epochs = 0;
  std::size_t dropout_k = 1;
  MaskGranularity granularity = MaskGranularity::per_batch;

  SelectorState() = default;
  SelectorState(std::size_t m, std::size_t k, long warmup, MaskGranularity g = MaskGranularity::per_batch)
      : logits(ParamBlock::zeros("selector.u", 1, static_cast<Eigen::Index>(m))),
        warmup_epochs(warmup),
        dropout_k(k),
        granularity(g) {
    if (k < 1 || k > m) {
      throw ArityError("selector: dropout k = " + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
    }
    if (warmup < 0) {
      throw ArityError("selector: negative warm-up");
    }
  }

  std::size_t size() const { return static_cast<std::size_t>(logits.value.cols()); }
  std::span<const double> u() const { return {logits.value.data(), size()}; }
  std::vector<double> pi() const { return coefficients(u()); }
  std::vector<double> inference_pi() const { return inference_coefficients(u(), dropout_k, size()); }
};

}  // namespace monet
