#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "monet/core/rng.hpp"
#include "monet/models/chain.hpp"

namespace monet {

/// One sampled label sequence, stored in canonical task indexing.
struct Trajectory {
  Permutation order;
  std::vector<int> labels;     // y-hat per task
  std::vector<double> probs;   // probability assigned to each task at its step
};

/// L ancestral samples per input row, following `order`. Rows of the result
/// are example-major (row i * L + l); columns are canonical tasks.
struct SampledChains {
  Matrix probs;
  Matrix labels;
};

inline SampledChains sample_chains(const ChainModel& model, const Permutation& order, const Matrix& x, int trajectories,
                                   RngStream& rng) {
  if (trajectories < 1) {
    throw ArityError("sample_chains: need at least one trajectory");
  }
  if (order.size() != model.tasks) {
    throw ShapeError("sample_chains: order size differs from task count");
  }
  const Eigen::Index n = x.rows();
  const Eigen::Index rows = n * trajectories;
  const Matrix h0 = model.encoder.forward(x);
  Matrix h(rows, h0.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int l = 0; l < trajectories; ++l) {
      h.row(i * trajectories + l) = h0.row(i);
    }
  }
  SampledChains out{Matrix(rows, model.tasks), Matrix(rows, model.tasks)};
  Eigen::VectorXd logits;
  for (int s = 0; s < model.tasks; ++s) {
    const int prev = s == 0 ? -1 : order[s - 1];
    const Matrix input = model.label_input(prev, prev < 0 ? out.labels.col(0) : out.labels.col(prev), rows);
    h = model.step(order[s], h, input, logits);
    const int task = order[s];
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double p = sigmoid(logits(r));
      out.probs(r, task) = p;
      out.labels(r, task) = rng.bernoulli(p) ? 1.0 : 0.0;
    }
  }
  return out;
}

/// Ancestral sampling of L trajectories for a single input along `order`.
inline std::vector<Trajectory> mrnn_sample(const ChainModel& model, const Eigen::RowVectorXd& x, int trajectories,
                                           RngStream& rng, const Permutation* order = nullptr) {
  const Permutation& o = order != nullptr ? *order : model.pool[0];
  const SampledChains s = sample_chains(model, o, Matrix(x), trajectories, rng);
  std::vector<Trajectory> out;
  for (int l = 0; l < trajectories; ++l) {
    Trajectory t{o, {}, {}};
    for (int k = 0; k < model.tasks; ++k) {
      t.labels.push_back(static_cast<int>(s.labels(l, k)));
      t.probs.push_back(s.probs(l, k));
    }
    out.push_back(std::move(t));
  }
  return out;
}

/// Inverse-CDF draw of an index from non-negative weights.
inline std::size_t draw_index(std::span<const double> weights, RngStream& rng) {
  double total = 0.0;
  for (double w : weights) {
    total += w;
  }
  const double target = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    acc += weights[m];
    if (target < acc) {
      return m;
    }
  }
  for (std::size_t m = weights.size(); m-- > 0;) {
    if (weights[m] > 0.0) {
      return m;
    }
  }
  return weights.size() - 1;
}

/// Monte-Carlo marginals p(y_t = 1 | x) for every row of `x` (n x T).
///
/// R orders are drawn per input from the inference coefficients and L
/// trajectories are sampled per order; the estimate averages the
/// conditional probabilities met along the sampled prefixes. When the
/// coefficients are one-hot all L*R trajectories use that order.
inline Matrix predict_marginals(const ChainModel& model, const Matrix& x, int trajectories, int order_draws,
                                RngStream& rng) {
  if (order_draws < 1) {
    throw ArityError("predict_marginals: need at least one order draw");
  }
  const Eigen::Index n = x.rows();
  const std::vector<double> pi = model.selector.inference_pi();
  const std::size_t top = selected_index(pi);
  Matrix out = Matrix::Zero(n, model.tasks);
  if (pi[top] == 1.0) {
    const int total = trajectories * order_draws;
    const SampledChains s = sample_chains(model, model.pool[top], x, total, rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.row(i) = s.probs.middleRows(i * total, total).colwise().mean();
    }
    return out;
  }
  std::map<std::size_t, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int r = 0; r < order_draws; ++r) {
      groups[draw_index(pi, rng)].push_back(i);
    }
  }
  for (const auto& [m, rows] : groups) {
    Matrix xs(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      xs.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
    }
    const SampledChains s = sample_chains(model, model.pool[m], xs, trajectories, rng);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out.row(rows[k]) += s.probs.middleRows(static_cast<Eigen::Index>(k) * trajectories, trajectories).colwise().sum();
    }
  }
  out /= static_cast<double>(trajectories) * order_draws;
  return out;
}

struct MarginalEstimate {
  std::vector<double> probs;
  int trajectories = 0;
};

/// Marginal estimate for a single input; `task` < 0 returns every task.
inline MarginalEstimate marginal(const ChainModel& model, const Eigen::RowVectorXd& x, int trajectories,
                                 int order_draws, RngStream& rng) {
  const Matrix p = predict_marginals(model, Matrix(x), trajectories, order_draws, rng);
  MarginalEstimate est;
  est.trajectories = trajectories * order_draws;
  for (int t = 0; t < model.tasks; ++t) {
    est.probs.push_back(p(0, t));
  }
  return est;
}

}  // namespace monet
