#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "monet/core/errors.hpp"
#include "monet/core/matrix.hpp"
#include "monet/core/param.hpp"
#include "monet/core/rng.hpp"

namespace monet {

/// Fully connected layer y = xW + b.
struct Dense {
  ParamBlock weight;
  ParamBlock bias;

  Dense() = default;
  Dense(const std::string& name, Eigen::Index in, Eigen::Index out, RngStream& rng)
      : weight(ParamBlock::glorot(name + ".W", in, out, rng)), bias(ParamBlock::zeros(name + ".b", 1, out)) {}

  Eigen::Index in_dim() const { return weight.value.rows(); }
  Eigen::Index out_dim() const { return weight.value.cols(); }

  Matrix forward(const Matrix& x) const {
    if (x.cols() != in_dim()) {
      throw ShapeError("dense '" + weight.name + "': input " + shape_str(x) + " against weight " +
                       shape_str(weight.value));
    }
    Matrix y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy) {
    weight.grad.noalias() += x.transpose() * dy;
    bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value.transpose();
  }

  std::vector<ParamBlock*> params() { return {&weight, &bias}; }
};

/// Convenience wrapper that keeps the last input for the backward pass.
struct CachedDense {
  Dense layer;
  Matrix input;

  Matrix forward(const Matrix& x) {
    input = x;
    return layer.forward(x);
  }
  Matrix backward(const Matrix& dy) { return layer.backward(input, dy); }
};

inline Matrix relu_backward(const Matrix& pre_activation, const Matrix& dy) {
  return dy.cwiseProduct(pre_activation.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
}

enum class Mode { train, eval };

/// Per-column batch normalisation with affine scale/shift.
struct BatchNorm {
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  ParamBlock scale;
  ParamBlock shift;
  RowVector running_mean;
  RowVector running_var;
  bool has_running_stats = false;

  struct Cache {
    Matrix x_hat;
    RowVector inv_std;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& name, Eigen::Index width)
      : scale(name + ".scale", Matrix::Ones(1, width)),
        shift(ParamBlock::zeros(name + ".shift", 1, width)),
        running_mean(RowVector::Zero(width)),
        running_var(RowVector::Ones(width)) {}

  Eigen::Index width() const { return scale.value.cols(); }

  Matrix forward(const Matrix& x, Mode mode, Cache* cache = nullptr) {
    if (x.cols() != width()) {
      throw ShapeError("batchnorm '" + scale.name + "': input " + shape_str(x) + " for width " +
                       std::to_string(width()));
    }
    RowVector mean;
    RowVector var;
    if (mode == Mode::train) {
      mean = x.colwise().mean();
      var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
      running_mean = kMomentum * running_mean + (1.0 - kMomentum) * mean;
      running_var = kMomentum * running_var + (1.0 - kMomentum) * var;
      has_running_stats = true;
    } else {
      if (!has_running_stats) {
        throw StateError("batchnorm '" + scale.name + "': eval mode before any train-mode call");
      }
      mean = running_mean;
      var = running_var;
    }
    const RowVector inv_std = (var.array() + kEps).rsqrt().matrix();
    Matrix x_hat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
    Matrix y = x_hat.array().rowwise() * scale.value.row(0).array();
    y.rowwise() += shift.value.row(0);
    if (cache != nullptr) {
      cache->x_hat = std::move(x_hat);
      cache->inv_std = inv_std;
    }
    return y;
  }

  /// Backward of a train-mode forward.
  Matrix backward(const Cache& cache, const Matrix& dy) {
    const double n = static_cast<double>(dy.rows());
    scale.grad.row(0) += dy.cwiseProduct(cache.x_hat).colwise().sum();
    shift.grad.row(0) += dy.colwise().sum();
    const Matrix dx_hat = dy.array().rowwise() * scale.value.row(0).array();
    const RowVector sum_dx_hat = dx_hat.colwise().sum();
    const RowVector sum_dx_hat_xhat = dx_hat.cwiseProduct(cache.x_hat).colwise().sum();
    Matrix dx = (n * dx_hat).rowwise() - sum_dx_hat;
    dx -= (cache.x_hat.array().rowwise() * sum_dx_hat_xhat.array()).matrix();
    dx = dx.array().rowwise() * (cache.inv_std.array() / n);
    return dx;
  }

  std::vector<ParamBlock*> params() { return {&scale, &shift}; }
};

}  // namespace monet
