#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "monet/core/errors.hpp"
#include "monet/core/matrix.hpp"

namespace monet {

/// Binary cross-entropy evaluated from the logit: max(l,0) - l*y + log1p(exp(-|l|)).
inline double bce_with_logits(double logit, double y) {
  if (y != 0.0 && y != 1.0) {
    throw LabelError("bce_with_logits: label must be 0 or 1, got " + std::to_string(y));
  }
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

/// Derivative of bce_with_logits with respect to the logit.
inline double bce_grad(double logit, double y) { return sigmoid(logit) - y; }

/// Element-wise BCE over matching logit/label matrices.
inline Matrix bce_with_logits(const Matrix& logits, const Matrix& y) {
  require_same_shape(logits, y, "bce_with_logits");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out.data()[i] = bce_with_logits(logits.data()[i], y.data()[i]);
  }
  return out;
}

inline double logsumexp(std::span<const double> v) {
  if (v.empty()) {
    throw ArityError("logsumexp: empty input");
  }
  if (v.size() == 1) {
    return v[0];
  }
  const double mx = *std::max_element(v.begin(), v.end());
  if (std::isinf(mx)) {
    return mx;
  }
  double s = 0.0;
  for (double x : v) {
    s += std::exp(x - mx);
  }
  return mx + std::log(s);
}

}  // namespace monet
