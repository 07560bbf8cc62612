#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>

#include "monet/core/errors.hpp"

namespace monet {

/// Row-major dense matrix; rows index examples of a batch.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

inline std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape " + shape_str(a) + " vs " + shape_str(b));
  }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline double sigmoid(double v) {
  if (v >= 0) {
    return 1.0 / (1.0 + std::exp(-v));
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Matrix sigmoid(const Matrix& m) { return m.unaryExpr([](double v) { return sigmoid(v); }); }

inline Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

}  // namespace monet
