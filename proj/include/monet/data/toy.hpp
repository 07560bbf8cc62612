#pragma once

#include <cmath>
#include <cstdint>

#include "monet/core/errors.hpp"
#include "monet/data/dataset.hpp"

namespace monet {

/// Recursive-band toy benchmark parameters (defaults: 500/250/250 examples).
struct ToySpec {
  int tasks = 5;
  Eigen::Index n_train = 500;
  Eigen::Index n_val = 250;
  Eigen::Index n_test = 250;
  std::uint64_t seed = 17;
};

/// Band boundary b_i^(t) = -1 + (i - 1) / 2^t.
inline double toy_boundary(long i, int t) { return -1.0 + static_cast<double>(i - 1) / std::ldexp(1.0, t); }

/// 1 iff x1 lies in one of the closed intervals [b_{2i}, b_{2i+1}], i = 1..2^t.
inline int toy_label(double x1, int t) {
  if (!(x1 >= -1.0 && x1 <= 1.0)) {
    throw DomainError("toy_label: x1 = " + std::to_string(x1) + " outside [-1, 1]");
  }
  if (t < 1) {
    throw DomainError("toy_label: task index must be >= 1");
  }
  const long bands = 1L << t;
  const long centre = static_cast<long>(std::ceil((x1 + 1.0) * std::ldexp(1.0, t) / 2.0));
  for (long i = centre - 1; i <= centre + 1; ++i) {
    if (i < 1 || i > bands) {
      continue;
    }
    if (toy_boundary(2 * i, t) <= x1 && x1 <= toy_boundary(2 * i + 1, t)) {
      return 1;
    }
  }
  return 0;
}

/// Independent closed form: parity of floor((x1 + 1) 2^t).
inline int bit_oracle(double x1, int t) {
  const auto cell = static_cast<long long>(std::floor((x1 + 1.0) * std::ldexp(1.0, t)));
  return static_cast<int>(cell % 2);
}

inline Dataset gen_toy_split(Eigen::Index n, int tasks, RngStream& rng) {
  Dataset d{Matrix(n, 2), Matrix(n, tasks)};
  for (Eigen::Index i = 0; i < n; ++i) {
    d.x(i, 0) = rng.uniform(-1.0, 1.0);
    d.x(i, 1) = rng.uniform(-1.0, 1.0);
    for (int t = 0; t < tasks; ++t) {
      d.y(i, t) = toy_label(d.x(i, 0), t + 1);
    }
  }
  return d;
}

inline DatasetSplit gen_toy(const ToySpec& spec) {
  if (spec.tasks < 1 || spec.n_train < 1 || spec.n_val < 1 || spec.n_test < 1) {
    throw ArityError("gen_toy: tasks and split sizes must be >= 1");
  }
  RngStream rng(spec.seed, "toy-data");
  DatasetSplit split;
  split.train = gen_toy_split(spec.n_train, spec.tasks, rng);
  split.val = gen_toy_split(spec.n_val, spec.tasks, rng);
  split.test = gen_toy_split(spec.n_test, spec.tasks, rng);
  return split;
}

}  // namespace monet
