#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "monet/data/toy.hpp"
#include "monet/experiment/config.hpp"
#include "monet/inference/metrics.hpp"
#include "monet/models/model.hpp"
#include "monet/models/train.hpp"

namespace monet {

inline constexpr const char* kReportFormat = "monet-report/1";
inline constexpr const char* kCheckpointFormat = "monet-checkpoint/1";

inline DatasetSplit load_data(const ExperimentConfig& c) {
  if (!c.train_csv.empty()) {
    DatasetSplit s{load_csv(c.train_csv), load_csv(c.val_csv), load_csv(c.test_csv)};
    if (s.train.tasks() != s.val.tasks() || s.train.tasks() != s.test.tasks() ||
        s.train.features() != s.val.features() || s.train.features() != s.test.features()) {
      throw ConfigError("train-csv", "train/val/test CSV files disagree on columns");
    }
    return s;
  }
  return gen_toy(ToySpec{c.tasks, c.n_train, c.n_val, c.n_test, c.data_seed});
}

/// Builds the architecture named by `c.model` for `features` inputs and `tasks` labels.
inline Model build_model(const ExperimentConfig& c, Eigen::Index features, int tasks) {
  RngStream init(c.seed, "init");
  Model m;
  if (c.model == "vmnc" || c.model == "vmns") {
    m.kind = c.model == "vmnc" ? ModelKind::vmnc : ModelKind::vmns;
    m.net = VmnModel(c.model == "vmns", features, tasks, c.hidden, c.encoder_layers, init);
    return m;
  }
  OrderPool pool;
  bool shared = false;
  if (c.model == "mrnn") {
    RngStream order_rng(c.seed, "mrnn-order");
    pool = OrderPool{tasks, {random_permutation(tasks, order_rng)}};
    shared = true;
    m.kind = ModelKind::mrnn;
  } else {
    m.kind = ModelKind::monet;
    if (c.model == "oracle") {
      pool = OrderPool{tasks, {Permutation::identity(tasks)}};
    } else if (!c.order.empty()) {
      pool = OrderPool{tasks, {Permutation::from_one_based(c.order)}};
    } else {
      RngStream pool_rng(c.seed, "order-pool");
      pool = sample_pool(tasks, static_cast<std::size_t>(c.resolved_orders()), pool_rng);
    }
  }
  const std::size_t mm = pool.size();
  const std::size_t k = mm == 1 ? 1 : static_cast<std::size_t>(c.resolved_dropout_k());
  SelectorState sel(mm, k, c.warmup, c.granularity());
  m.net = ChainModel(shared, features, tasks, c.hidden, c.encoder_layers, std::move(pool), std::move(sel),
                     c.encoding(), init);
  return m;
}

struct RunReport {
  ExperimentConfig config;
  MetricsReport test;
  MetricsReport val;
  std::optional<Permutation> selected_order;
  bool identity_found = false;
  std::vector<double> final_pi;
  std::vector<std::vector<int>> pool;  // 1-based
  std::vector<double> hard_selection_scores;
  std::vector<EpochRecord> history;
  double runtime_seconds = 0.0;
};

namespace detail {

inline nlohmann::json nan_to_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double null_to_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const RunReport& r, bool include_runtime = true) {
  nlohmann::json hist = nlohmann::json::array();
  for (const EpochRecord& e : r.history) {
    hist.push_back({{"epoch", e.epoch},
                    {"loss", detail::nan_to_null(e.loss)},
                    {"val_accuracy", detail::nan_to_null(e.val_accuracy)},
                    {"frobenius_to_identity", detail::nan_to_null(e.frobenius_to_identity)},
                    {"pi", e.pi}});
  }
  nlohmann::json j = {{"format", kReportFormat},
                      {"config", to_json(r.config)},
                      {"seed", r.config.seed},
                      {"metrics", {{"test", r.test}, {"val", r.val}}},
                      {"selected_order", r.selected_order ? nlohmann::json(r.selected_order->one_based())
                                                          : nlohmann::json(nullptr)},
                      {"identity_found", r.identity_found},
                      {"final_pi", r.final_pi},
                      {"pool", r.pool},
                      {"hard_selection_scores", r.hard_selection_scores},
                      {"history", hist}};
  if (include_runtime) {
    j["runtime_seconds"] = r.runtime_seconds;
  }
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  if (j.at("format") != kReportFormat) {
    throw Error("report: unsupported format tag");
  }
  RunReport r;
  r.config = config_from_json(j.at("config"));
  r.test = j.at("metrics").at("test").get<MetricsReport>();
  r.val = j.at("metrics").at("val").get<MetricsReport>();
  if (!j.at("selected_order").is_null()) {
    r.selected_order = Permutation::from_one_based(j.at("selected_order").get<std::vector<int>>());
  }
  r.identity_found = j.at("identity_found").get<bool>();
  r.final_pi = j.at("final_pi").get<std::vector<double>>();
  r.pool = j.at("pool").get<std::vector<std::vector<int>>>();
  r.hard_selection_scores = j.at("hard_selection_scores").get<std::vector<double>>();
  for (const auto& e : j.at("history")) {
    EpochRecord rec;
    rec.epoch = e.at("epoch").get<int>();
    rec.loss = detail::null_to_nan(e.at("loss"));
    rec.val_accuracy = detail::null_to_nan(e.at("val_accuracy"));
    rec.frobenius_to_identity = detail::null_to_nan(e.at("frobenius_to_identity"));
    rec.pi = e.value("pi", std::vector<double>{});
    r.history.push_back(rec);
  }
  r.runtime_seconds = j.value("runtime_seconds", 0.0);
  return r;
}

inline void write_history_csv(const std::vector<EpochRecord>& h, std::ostream& os) {
  os << "epoch,loss,val_accuracy,frobenius_to_identity\n";
  const auto num = [](double v) { return std::isfinite(v) ? detail::format_double(v) : std::string(); };
  for (const EpochRecord& e : h) {
    os << e.epoch << ',' << num(e.loss) << ',' << num(e.val_accuracy) << ',' << num(e.frobenius_to_identity)
       << '\n';
  }
}

/// One line of the per-epoch log: the five largest coefficients with their
/// pool indices, the entropy of pi and the distance of the soft order to I.
inline nlohmann::json epoch_log_json(const EpochRecord& e, const OrderPool* pool) {
  nlohmann::json j = {{"epoch", e.epoch},
                      {"loss", detail::nan_to_null(e.loss)},
                      {"val_accuracy", detail::nan_to_null(e.val_accuracy)}};
  if (pool != nullptr && !e.pi.empty()) {
    std::vector<std::size_t> idx(e.pi.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t top = std::min<std::size_t>(5, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(),
                      [&](std::size_t a, std::size_t b) { return e.pi[a] > e.pi[b] || (e.pi[a] == e.pi[b] && a < b); });
    nlohmann::json best = nlohmann::json::array();
    for (std::size_t r = 0; r < top; ++r) {
      best.push_back({{"index", idx[r]}, {"order", (*pool)[idx[r]].one_based()}, {"pi", e.pi[idx[r]]}});
    }
    double entropy = 0.0;
    for (double p : e.pi) {
      entropy -= p > 0.0 ? p * std::log(p) : 0.0;
    }
    j["top_pi"] = best;
    j["entropy"] = entropy;
    j["frobenius_to_identity"] = detail::nan_to_null(e.frobenius_to_identity);
  }
  return j;
}

// ---- checkpoints ----------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto v = j.at("values").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw ShapeError("checkpoint: value count does not match shape");
  }
  Matrix m(rows, cols);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

inline std::vector<BatchNorm*> batchnorms(Model& m) {
  std::vector<BatchNorm*> out;
  if (!m.is_chain()) {
    for (VmnHead& h : m.vmn().heads) {
      out.push_back(&h.bn1);
      out.push_back(&h.bn2);
    }
  }
  return out;
}

}  // namespace detail

inline nlohmann::json checkpoint_json(Model& m, const ExperimentConfig& c, Eigen::Index features) {
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json j = {{"format", kCheckpointFormat},
                      {"kind", to_string(m.kind)},
                      {"config", to_json(c)},
                      {"features", features},
                      {"tasks", m.tasks()}};
  if (m.is_chain()) {
    std::vector<std::vector<int>> pool;
    for (const Permutation& p : m.chain().pool.orders) {
      pool.push_back(p.one_based());
    }
    j["pool"] = pool;
    j["dropout_k"] = m.chain().selector.dropout_k;
  }
  for (ParamBlock* p : m.params()) {
    params[p->name] = detail::matrix_json(p->value);
  }
  j["params"] = params;
  nlohmann::json bn = nlohmann::json::object();
  for (BatchNorm* b : detail::batchnorms(m)) {
    bn[b->scale.name] = {{"mean", detail::matrix_json(b->running_mean)},
                         {"var", detail::matrix_json(b->running_var)},
                         {"initialised", b->has_running_stats}};
  }
  j["batchnorm"] = bn;
  return j;
}

struct LoadedCheckpoint {
  ExperimentConfig config;
  Model model;
};

inline LoadedCheckpoint load_checkpoint(const nlohmann::json& j) {
  if (j.at("format") != kCheckpointFormat) {
    throw Error("checkpoint: unsupported format tag");
  }
  LoadedCheckpoint out{config_from_json(j.at("config")), {}};
  out.model = build_model(out.config, j.at("features").get<Eigen::Index>(), j.at("tasks").get<int>());
  if (out.model.is_chain()) {
    ChainModel& ch = out.model.chain();
    std::vector<Permutation> orders;
    for (const auto& p : j.at("pool")) {
      orders.push_back(Permutation::from_one_based(p.get<std::vector<int>>()));
    }
    ch.pool = OrderPool{ch.tasks, std::move(orders)};
    ch.selector = SelectorState(ch.pool.size(), j.at("dropout_k").get<std::size_t>(), ch.selector.warmup_epochs,
                                ch.selector.granularity);
  }
  const auto& params = j.at("params");
  for (ParamBlock* p : out.model.params()) {
    Matrix v = detail::matrix_from_json(params.at(p->name));
    require_same_shape(v, p->value, ("checkpoint block " + p->name).c_str());
    *p = ParamBlock(p->name, std::move(v));
  }
  for (BatchNorm* b : detail::batchnorms(out.model)) {
    const auto& e = j.at("batchnorm").at(b->scale.name);
    b->running_mean = detail::matrix_from_json(e.at("mean"));
    b->running_var = detail::matrix_from_json(e.at("var"));
    b->has_running_stats = e.at("initialised").get<bool>();
  }
  return out;
}

// ---- single run -------------------------------------------------------------

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw Error("cannot write " + path.string());
  }
  os << text;
}

struct RunArtifacts {
  RunReport report;
  Model model;
  DatasetSplit data;
};

/// Trains one model, evaluates it and, when `out_dir` is non-empty, writes
/// report.json, history.csv, epochs.jsonl, soft_order_epoch_*.json and
/// checkpoint.json. `progress` receives each per-epoch log line.
inline RunArtifacts run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir = {},
                                   const std::function<void(const std::string&)>& progress = {}) {
  c.validate();
  const auto start = std::chrono::steady_clock::now();
  RunArtifacts art;
  art.data = load_data(c);
  art.model = build_model(c, art.data.train.features(), art.data.train.tasks());
  const TrainConfig tc = c.train_config();
  RunReport& rep = art.report;
  rep.config = c;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
  }
  const bool dumps = !out_dir.empty() && c.soft_order_dumps && art.model.is_chain() &&
                     art.model.kind == ModelKind::monet;
  std::ofstream epoch_log;
  if (!out_dir.empty()) {
    epoch_log.open(out_dir / "epochs.jsonl", std::ios::binary);
  }
  const EpochCallback on_epoch = [&](const EpochRecord& e) {
    const OrderPool* pool = art.model.is_chain() ? &art.model.chain().pool : nullptr;
    if (pool != nullptr && pool->size() != e.pi.size()) {
      pool = nullptr;
    }
    const std::string line = epoch_log_json(e, pool).dump();
    if (epoch_log.is_open()) {
      epoch_log << line << '\n' << std::flush;
    }
    if (progress) {
      progress(line);
    }
    if (dumps && pool != nullptr) {
      nlohmann::json j = {{"epoch", e.epoch}, {"soft_order", combine(*pool, e.pi)}};
      char name[64];
      std::snprintf(name, sizeof(name), "soft_order_epoch_%04d.json", e.epoch);
      write_text(out_dir / name, j.dump());
    }
  };

  if (c.model == "hard-selection") {
    HardSelectionResult hs = hard_selection_train(art.model, art.data, tc, static_cast<int>(c.warmup), on_epoch);
    rep.history = std::move(hs.history);
    rep.hard_selection_scores = std::move(hs.scores);
  } else {
    rep.history = train(art.model, art.data, tc, on_epoch);
  }

  RunStreams streams(c.seed);
  RngStream test_rng = streams.trajectory.child("test");
  RngStream val_rng = streams.trajectory.child("val-final");
  rep.test = score_predictions(predict(art.model, art.data.test.x, tc.trajectories, tc.order_draws, test_rng),
                               art.data.test.y, tc.threshold);
  rep.val = score_predictions(predict(art.model, art.data.val.x, tc.trajectories, tc.order_draws, val_rng),
                              art.data.val.y, tc.threshold);
  if (art.model.is_chain()) {
    const ChainModel& ch = art.model.chain();
    rep.final_pi = ch.selector.pi();
    rep.selected_order = ch.pool[selected_index(rep.final_pi)];
    rep.identity_found = rep.selected_order->is_identity();
    for (const Permutation& p : ch.pool.orders) {
      rep.pool.push_back(p.one_based());
    }
  }
  rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!out_dir.empty()) {
    write_text(out_dir / "report.json", to_json(rep).dump(2));
    std::ostringstream hist;
    write_history_csv(rep.history, hist);
    write_text(out_dir / "history.csv", hist.str());
    write_text(out_dir / "checkpoint.json",
               checkpoint_json(art.model, c, art.data.train.features()).dump());
  }
  return art;
}

inline RunReport run(const ExperimentConfig& c, const std::filesystem::path& out_dir = {},
                     const std::function<void(const std::string&)>& progress = {}) {
  return run_experiment(c, out_dir, progress).report;
}

}  // namespace monet
