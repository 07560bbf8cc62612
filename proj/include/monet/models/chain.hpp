#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monet/core/gru.hpp"
#include "monet/core/layers.hpp"
#include "monet/core/loss.hpp"
#include "monet/models/encoder.hpp"
#include "monet/order/permutation.hpp"
#include "monet/selector/selector.hpp"

namespace monet {

/// How a previous task's label is presented to the next recurrent step.
enum class LabelEncoding {
  signed_unit,  // 2y - 1, maps {0,1} to {-1,+1}
  literal,      // 2(y - 1), maps {0,1} to {-2,0}
};

inline double encode_label(double y, LabelEncoding e) {
  return e == LabelEncoding::signed_unit ? 2.0 * y - 1.0 : 2.0 * (y - 1.0);
}

/// Encoder feeding h(0) of a chain of recurrent cells, each followed by a
/// one-logit readout. With `shared_cell` a single cell serves every step
/// (MRNN); otherwise cell t always predicts task t whatever its position
/// in the order (MONET).
struct ChainModel {
  bool shared_cell = false;
  int tasks = 0;
  LabelEncoding encoding = LabelEncoding::signed_unit;
  Encoder encoder;
  std::vector<GruCell> cells;
  std::vector<Dense> readouts;
  OrderPool pool;
  SelectorState selector;

  ChainModel() = default;
  ChainModel(bool shared, Eigen::Index features, int task_count, Eigen::Index hidden, int encoder_depth,
             OrderPool order_pool, SelectorState sel, LabelEncoding enc, RngStream& rng)
      : shared_cell(shared),
        tasks(task_count),
        encoding(enc),
        encoder(features, hidden, encoder_depth, rng),
        pool(std::move(order_pool)),
        selector(std::move(sel)) {
    if (pool.tasks != tasks) {
      throw ShapeError("chain model: pool has " + std::to_string(pool.tasks) + " tasks, model " +
                       std::to_string(tasks));
    }
    if (selector.size() != pool.size()) {
      throw ShapeError("chain model: selector size differs from pool size");
    }
    const int n = shared ? 1 : tasks;
    for (int c = 0; c < n; ++c) {
      cells.emplace_back("cell." + std::to_string(c), tasks, hidden, rng);
      readouts.emplace_back("readout." + std::to_string(c), hidden, 1, rng);
    }
  }

  Eigen::Index hidden_size() const { return cells.front().hidden_size(); }
  std::size_t cell_index(int task) const { return shared_cell ? 0 : static_cast<std::size_t>(task); }

  /// Predictor parameters: encoder, cells and readouts (not the order logits).
  std::vector<ParamBlock*> predictor_params() {
    std::vector<ParamBlock*> p = encoder.params();
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (ParamBlock* b : cells[c].params()) {
        p.push_back(b);
      }
      for (ParamBlock* b : readouts[c].params()) {
        p.push_back(b);
      }
    }
    return p;
  }

  std::vector<ParamBlock*> params() {
    auto p = predictor_params();
    p.push_back(&selector.logits);
    return p;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (ParamBlock* p : params()) {
      n += static_cast<std::size_t>(p->size());
    }
    return n;
  }

  /// Label channel input: zero except column `task` (if >= 0) holding the encoded label.
  Matrix label_input(int task, const Eigen::Ref<const Eigen::VectorXd>& labels, Eigen::Index rows) const {
    Matrix in = Matrix::Zero(rows, tasks);
    if (task >= 0) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        in(i, task) = encode_label(labels(i), encoding);
      }
    }
    return in;
  }

  /// One recurrent step predicting `task`; writes the logits and returns h'.
  Matrix step(int task, const Matrix& h, const Matrix& input, Eigen::VectorXd& logits,
              GruCell::Cache* cache = nullptr) const {
    const std::size_t c = cell_index(task);
    Matrix next = cells[c].forward(h, input, cache);
    logits = readouts[c].forward(next).col(0);
    return next;
  }
};

/// Shared-prefix unroll of several orders: orders with a common prefix reuse
/// the same hidden states under teacher forcing.
struct PrefixTrie {
  struct Node {
    int parent;  // -1 for the first step
    int task;
  };
  std::vector<Node> nodes;               // parents always precede children
  std::vector<std::vector<int>> paths;   // node id per step, one path per order

  static PrefixTrie build(const OrderPool& pool, std::span<const std::size_t> order_ids) {
    PrefixTrie trie;
    std::map<std::pair<int, int>, int> index;
    for (std::size_t id : order_ids) {
      const Permutation& p = pool[id];
      std::vector<int> path;
      int parent = -1;
      for (int s = 0; s < p.size(); ++s) {
        const auto key = std::make_pair(parent, p[s]);
        auto it = index.find(key);
        if (it == index.end()) {
          it = index.emplace(key, static_cast<int>(trie.nodes.size())).first;
          trie.nodes.push_back(Node{parent, p[s]});
        }
        parent = it->second;
        path.push_back(parent);
      }
      trie.paths.push_back(std::move(path));
    }
    return trie;
  }
};

/// Teacher-forced forward pass over a set of orders.
struct ChainPass {
  std::vector<std::size_t> order_ids;
  PrefixTrie trie;
  Encoder::Cache encoder_cache;
  Matrix h0;
  std::vector<GruCell::Cache> cell_caches;
  std::vector<Matrix> hidden;
  std::vector<Eigen::VectorXd> logits;
  std::vector<Eigen::VectorXd> nll;  // per node, per example
  Matrix order_nll;                  // examples x orders
};

inline ChainPass chain_forward(const ChainModel& model, const Matrix& x, const Matrix& y,
                               std::vector<std::size_t> order_ids, bool keep_caches) {
  if (y.cols() != model.tasks || y.rows() != x.rows()) {
    throw ShapeError("chain_forward: labels " + shape_str(y) + " for " + std::to_string(model.tasks) + " tasks and " +
                     std::to_string(x.rows()) + " examples");
  }
  ChainPass pass;
  pass.order_ids = std::move(order_ids);
  pass.trie = PrefixTrie::build(model.pool, pass.order_ids);
  const Eigen::Index rows = x.rows();
  pass.h0 = model.encoder.forward(x, keep_caches ? &pass.encoder_cache : nullptr);
  const std::size_t n = pass.trie.nodes.size();
  pass.hidden.resize(n);
  pass.logits.resize(n);
  pass.nll.resize(n);
  if (keep_caches) {
    pass.cell_caches.resize(n);
  }
  for (std::size_t id = 0; id < n; ++id) {
    const auto& node = pass.trie.nodes[id];
    const int prev_task = node.parent < 0 ? -1 : pass.trie.nodes[static_cast<std::size_t>(node.parent)].task;
    const Matrix& h = node.parent < 0 ? pass.h0 : pass.hidden[static_cast<std::size_t>(node.parent)];
    const Matrix input =
        model.label_input(prev_task, prev_task < 0 ? y.col(0) : y.col(prev_task), rows);
    pass.hidden[id] = model.step(node.task, h, input, pass.logits[id], keep_caches ? &pass.cell_caches[id] : nullptr);
    Eigen::VectorXd& l = pass.nll[id];
    l.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      l(i) = bce_with_logits(pass.logits[id](i), y(i, node.task));
    }
  }
  pass.order_nll = Matrix::Zero(rows, static_cast<Eigen::Index>(pass.order_ids.size()));
  for (std::size_t j = 0; j < pass.order_ids.size(); ++j) {
    for (int node : pass.trie.paths[j]) {
      pass.order_nll.col(static_cast<Eigen::Index>(j)) += pass.nll[static_cast<std::size_t>(node)];
    }
  }
  if (!keep_caches) {
    pass.hidden.clear();
  }
  return pass;
}

/// Backpropagates sum_{i,j} weights(i,j) * order_nll(i,j) into the predictor.
inline void chain_backward(ChainModel& model, const ChainPass& pass, const Matrix& y, const Matrix& weights) {
  const std::size_t n = pass.trie.nodes.size();
  const Eigen::Index rows = y.rows();
  std::vector<Eigen::VectorXd> node_w(n, Eigen::VectorXd::Zero(rows));
  for (std::size_t j = 0; j < pass.order_ids.size(); ++j) {
    for (int node : pass.trie.paths[j]) {
      node_w[static_cast<std::size_t>(node)] += weights.col(static_cast<Eigen::Index>(j));
    }
  }
  std::vector<Matrix> dh(n);
  Matrix dh0 = Matrix::Zero(rows, model.hidden_size());
  for (std::size_t id = n; id-- > 0;) {
    const auto& node = pass.trie.nodes[id];
    const std::size_t c = model.cell_index(node.task);
    Matrix dlogit(rows, 1);
    for (Eigen::Index i = 0; i < rows; ++i) {
      dlogit(i, 0) = node_w[id](i) * bce_grad(pass.logits[id](i), y(i, node.task));
    }
    Matrix d = model.readouts[c].backward(pass.hidden[id], dlogit);
    if (dh[id].size() != 0) {
      d += dh[id];
    }
    Matrix dprev = model.cells[c].backward(pass.cell_caches[id], d);
    if (node.parent < 0) {
      dh0 += dprev;
    } else {
      Matrix& target = dh[static_cast<std::size_t>(node.parent)];
      if (target.size() == 0) {
        target = std::move(dprev);
      } else {
        target += dprev;
      }
    }
  }
  model.encoder.backward(pass.encoder_cache, dh0);
}

/// Teacher-forced negative log-likelihood of one order.
struct ChainNll {
  Matrix step_nll;        // examples x T, columns in step order
  Eigen::VectorXd total;  // per example
};

inline ChainNll chain_nll(const ChainModel& model, const Permutation& order, const Matrix& x, const Matrix& y) {
  if (order.size() != model.tasks) {
    throw ShapeError("chain_nll: order of size " + std::to_string(order.size()) + " for " +
                     std::to_string(model.tasks) + " tasks");
  }
  const Eigen::Index rows = x.rows();
  ChainNll out{Matrix(rows, model.tasks), Eigen::VectorXd::Zero(rows)};
  Matrix h = model.encoder.forward(x);
  Eigen::VectorXd logits;
  for (int s = 0; s < model.tasks; ++s) {
    const int prev = s == 0 ? -1 : order[s - 1];
    const Matrix input = model.label_input(prev, prev < 0 ? y.col(0) : y.col(prev), rows);
    h = model.step(order[s], h, input, logits);
    for (Eigen::Index i = 0; i < rows; ++i) {
      out.step_nll(i, s) = bce_with_logits(logits(i), y(i, order[s]));
    }
  }
  out.total = out.step_nll.rowwise().sum();
  return out;
}

/// Result of the mixture objective on one batch.
struct MixtureResult {
  double loss = 0.0;
  Eigen::VectorXd per_example;  // L_i
  Matrix order_nll;             // examples x active orders
  std::vector<std::size_t> active;
};

/// Training objective over the active orders of one example.
enum class Objective {
  mixture,   // L_i = -log sum_m pi~_m exp(-l_m)
  expected,  // L_i = sum_m pi~_m l_m, an upper bound of the mixture loss
};

inline std::string to_string(Objective o) { return o == Objective::mixture ? "mixture" : "expected"; }

/// Mixture loss sum_i -log sum_{m active for i} pi~_{im} exp(-l_{im}), or its
/// expected-NLL upper bound. `masks` holds either one mask for the whole
/// batch or one per example. With `backprop`, predictor gradients and the
/// order-logit gradient (pi~_m (1 - exp(L_i - l_m)) for the mixture,
/// pi~_m (l_m - L_i) for the bound) are accumulated.
inline MixtureResult mixture_objective(ChainModel& model, const Matrix& x, const Matrix& y,
                                       const std::vector<DropoutMask>& masks, bool backprop,
                                       Objective objective = Objective::mixture) {
  const Eigen::Index rows = x.rows();
  const std::size_t m_total = model.pool.size();
  if (masks.size() != 1 && masks.size() != static_cast<std::size_t>(rows)) {
    throw ArityError("mixture_objective: need one mask per batch or per example");
  }
  std::vector<std::uint8_t> any(m_total, 0);
  for (const DropoutMask& mk : masks) {
    if (mk.size() != m_total) {
      throw ArityError("mixture_objective: mask length differs from pool size");
    }
    if (mk.count() == 0) {
      throw StateError("mixture_objective: degenerate all-zero mask");
    }
    for (std::size_t m = 0; m < m_total; ++m) {
      any[m] |= mk.bits[m];
    }
  }
  MixtureResult res;
  for (std::size_t m = 0; m < m_total; ++m) {
    if (any[m]) {
      res.active.push_back(m);
    }
  }
  ChainPass pass = chain_forward(model, x, y, res.active, backprop);
  res.order_nll = pass.order_nll;
  const auto cols = static_cast<Eigen::Index>(res.active.size());

  Matrix pi_tilde = Matrix::Zero(rows, cols);
  std::vector<double> shared_pi;
  if (masks.size() == 1) {
    shared_pi = masked_coefficients(model.selector.u(), masks[0]);
  }
  res.per_example.resize(rows);
  Matrix posterior = Matrix::Zero(rows, cols);
  std::vector<double> terms;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::vector<double> pi =
        masks.size() == 1 ? shared_pi : masked_coefficients(model.selector.u(), masks[static_cast<std::size_t>(i)]);
    terms.clear();
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double w = pi[res.active[static_cast<std::size_t>(j)]];
      pi_tilde(i, j) = w;
      terms.push_back(w > 0.0 ? std::log(w) - pass.order_nll(i, j) : -std::numeric_limits<double>::infinity());
    }
    if (objective == Objective::expected) {
      double li = 0.0;
      for (Eigen::Index j = 0; j < cols; ++j) {
        li += pi_tilde(i, j) > 0.0 ? pi_tilde(i, j) * pass.order_nll(i, j) : 0.0;
      }
      res.per_example(i) = li;
      continue;
    }
    const double li = -logsumexp(terms);
    res.per_example(i) = li;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (pi_tilde(i, j) > 0.0) {
        posterior(i, j) = std::exp(terms[static_cast<std::size_t>(j)] + li);
      }
    }
  }
  res.loss = res.per_example.sum();
  if (backprop) {
    if (objective == Objective::expected) {
      chain_backward(model, pass, y, pi_tilde);
      for (Eigen::Index j = 0; j < cols; ++j) {
        const auto m = static_cast<Eigen::Index>(res.active[static_cast<std::size_t>(j)]);
        model.selector.logits.grad(0, m) +=
            (pi_tilde.col(j).array() * (pass.order_nll.col(j) - res.per_example).array()).sum();
      }
    } else {
      chain_backward(model, pass, y, posterior);
      for (Eigen::Index j = 0; j < cols; ++j) {
        const auto m = static_cast<Eigen::Index>(res.active[static_cast<std::size_t>(j)]);
        model.selector.logits.grad(0, m) += (pi_tilde.col(j) - posterior.col(j)).sum();
      }
    }
  }
  return res;
}

}  // namespace monet
