#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "monet/core/optim.hpp"
#include "monet/data/dataset.hpp"
#include "monet/inference/metrics.hpp"
#include "monet/models/model.hpp"

namespace monet {

struct TrainConfig {
  int epochs = 500;
  Eigen::Index batch = 64;
  double lr = 5e-4;
  double lr_decay = 0.99;
  double selector_lr = 5e-3;
  double weight_decay = 0.0;
  int trajectories = 20;
  int order_draws = 1;
  double threshold = 0.5;
  std::uint64_t seed = 17;
  bool track_validation = true;
  Objective objective = Objective::mixture;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;          // mean per-example training loss
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
  double frobenius_to_identity = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> pi;     // order coefficients after the epoch (chain models)
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Random streams of one run, one per concern.
struct RunStreams {
  RngStream shuffle;
  RngStream mask;
  RngStream trajectory;

  explicit RunStreams(std::uint64_t seed)
      : shuffle(seed, "shuffle"), mask(seed, "dropout-mask"), trajectory(seed, "trajectory-sampling") {}
};

inline double soft_order_distance(const ChainModel& m) {
  const SoftOrder omega = combine(m.pool, m.selector.pi());
  return frobenius_sq(omega, perm_matrix(Permutation::identity(m.tasks)));
}

/// One optimisation step of a chain model on a batch. Samples the dropout
/// mask(s), evaluates the mixture loss, updates predictor parameters and,
/// unless frozen by warm-up, the order logits. Returns the summed batch loss.
inline double monet_train_step(ChainModel& model, const Matrix& x, const Matrix& y, long epoch, double lr,
                               const TrainConfig& cfg, RngStream& mask_rng) {
  const std::size_t m_total = model.pool.size();
  std::vector<DropoutMask> masks;
  if (model.selector.granularity == MaskGranularity::per_example && model.selector.dropout_k < m_total) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      masks.push_back(sample_mask(m_total, model.selector.dropout_k, mask_rng));
    }
  } else {
    masks.push_back(sample_mask(m_total, model.selector.dropout_k, mask_rng));
  }
  const MixtureResult res = mixture_objective(model, x, y, masks, true, cfg.objective);
  if (!std::isfinite(res.loss)) {
    throw NumericError("non-finite loss");
  }
  adam_step(model.predictor_params(), lr, AdamHyper{}, cfg.weight_decay);
  if (m_total > 1 && !warmup_gate(epoch, model.selector.warmup_epochs)) {
    adam_step(model.selector.logits, cfg.selector_lr);
  } else {
    model.selector.logits.zero_grad();
  }
  return res.loss;
}

inline double vmn_train_step(VmnModel& model, const Matrix& x, const Matrix& y, double lr, const TrainConfig& cfg) {
  const double loss = model.loss(x, y, true);
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss");
  }
  adam_step(model.params(), lr, AdamHyper{}, cfg.weight_decay);
  return loss;
}

/// Validation accuracy with the current parameters.
inline double validation_accuracy(Model& model, const Dataset& val, const TrainConfig& cfg, RngStream& rng) {
  const Matrix p = predict(model, val.x, cfg.trajectories, cfg.order_draws, rng);
  return score_predictions(p, val.y, cfg.threshold).mean_accuracy;
}

/// Trains epochs [first_epoch, last_epoch). The learning rate decays once
/// per epoch from its base value. Throws NumericError with the epoch/batch
/// coordinates on a non-finite loss.
inline std::vector<EpochRecord> train_epochs(Model& model, const DatasetSplit& data, const TrainConfig& cfg,
                                             RunStreams& streams, int first_epoch, int last_epoch,
                                             const EpochCallback& on_epoch = {}) {
  std::vector<EpochRecord> history;
  for (int epoch = first_epoch; epoch < last_epoch; ++epoch) {
    const double lr = exp_decay(cfg.lr, cfg.lr_decay, epoch);
    const auto plan = batches(data.train.size(), cfg.batch, streams.shuffle, true);
    double total = 0.0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const Dataset batch = data.train.subset(plan[b]);
      try {
        if (model.is_chain()) {
          total += monet_train_step(model.chain(), batch.x, batch.y, epoch, lr, cfg, streams.mask);
        } else {
          total += vmn_train_step(model.vmn(), batch.x, batch.y, lr, cfg);
        }
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = total / static_cast<double>(data.train.size());
    if (cfg.track_validation) {
      RngStream rng = streams.trajectory.child("val-epoch-" + std::to_string(epoch));
      rec.val_accuracy = validation_accuracy(model, data.val, cfg, rng);
    }
    if (model.is_chain()) {
      rec.pi = model.chain().selector.pi();
      rec.frobenius_to_identity = soft_order_distance(model.chain());
    }
    if (on_epoch) {
      on_epoch(rec);
    }
    history.push_back(std::move(rec));
  }
  return history;
}

inline std::vector<EpochRecord> train(Model& model, const DatasetSplit& data, const TrainConfig& cfg,
                                      const EpochCallback& on_epoch = {}) {
  RunStreams streams(cfg.seed);
  return train_epochs(model, data, cfg, streams, 0, cfg.epochs, on_epoch);
}

/// Draws an index with probability proportional to its (non-negative) score.
inline std::size_t proportional_choice(std::span<const double> scores, RngStream& rng) {
  double total = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0)) {
      throw WeightError("proportional_choice: negative score");
    }
    total += s;
  }
  if (!(total > 0.0)) {
    return rng.index(scores.size());
  }
  return draw_index(scores, rng);
}

struct HardSelectionResult {
  std::vector<double> scores;  // per-order validation accuracy after exploration
  std::size_t chosen = 0;      // index into the exploration pool
  Permutation order;
  std::vector<EpochRecord> history;
};

/// Exploration-then-commit order selection: all pool orders are trained with
/// frozen uniform coefficients for `exploration_epochs`, one order is drawn
/// with probability proportional to its validation accuracy, and training
/// continues on that order alone. `model` ends up holding a one-order pool.
inline HardSelectionResult hard_selection_train(Model& model, const DatasetSplit& data, const TrainConfig& cfg,
                                                int exploration_epochs, const EpochCallback& on_epoch = {}) {
  if (!model.is_chain()) {
    throw ConfigError("model", "hard selection needs a chain model");
  }
  ChainModel& chain = model.chain();
  const std::size_t m_total = chain.pool.size();
  RunStreams streams(cfg.seed);
  HardSelectionResult res;

  const SelectorState saved = chain.selector;
  chain.selector = SelectorState(m_total, m_total, std::numeric_limits<long>::max(), saved.granularity);
  const int explore = std::min(exploration_epochs, cfg.epochs);
  res.history = train_epochs(model, data, cfg, streams, 0, explore, on_epoch);

  RngStream score_rng = streams.trajectory.child("exploration-scores");
  for (std::size_t m = 0; m < m_total; ++m) {
    const SampledChains s = sample_chains(chain, chain.pool[m], data.val.x, cfg.trajectories * cfg.order_draws,
                                          score_rng);
    const int l = cfg.trajectories * cfg.order_draws;
    Matrix p(data.val.size(), chain.tasks);
    for (Eigen::Index i = 0; i < data.val.size(); ++i) {
      p.row(i) = s.probs.middleRows(i * l, l).colwise().mean();
    }
    res.scores.push_back(score_predictions(p, data.val.y, cfg.threshold).mean_accuracy);
  }
  RngStream pick(cfg.seed, "hard-selection");
  res.chosen = proportional_choice(res.scores, pick);
  res.order = chain.pool[res.chosen];

  chain.pool = OrderPool{chain.tasks, {res.order}};
  chain.selector = SelectorState(1, 1, 0, saved.granularity);
  auto rest = train_epochs(model, data, cfg, streams, explore, cfg.epochs, on_epoch);
  res.history.insert(res.history.end(), rest.begin(), rest.end());
  return res;
}

}  // namespace monet
