#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "monet/core/matrix.hpp"
#include "monet/core/rng.hpp"

namespace monet {

/// A trainable tensor together with its gradient accumulator and Adam moments.
struct ParamBlock {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m1;
  Matrix m2;
  long step = 0;

  ParamBlock() = default;
  ParamBlock(std::string n, Matrix v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())),
        m1(Matrix::Zero(value.rows(), value.cols())),
        m2(Matrix::Zero(value.rows(), value.cols())) {}

  static ParamBlock zeros(std::string n, Eigen::Index rows, Eigen::Index cols) {
    return ParamBlock(std::move(n), Matrix::Zero(rows, cols));
  }

  /// Glorot-uniform in +-sqrt(6 / (fan_in + fan_out)).
  static ParamBlock glorot(std::string n, Eigen::Index fan_in, Eigen::Index fan_out, RngStream& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix v(fan_in, fan_out);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      v.data()[i] = rng.uniform(-limit, limit);
    }
    return ParamBlock(std::move(n), std::move(v));
  }

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

}  // namespace monet
