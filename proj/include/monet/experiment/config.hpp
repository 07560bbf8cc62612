#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "monet/core/errors.hpp"
#include "monet/models/chain.hpp"
#include "monet/models/train.hpp"
#include "monet/order/permutation.hpp"

namespace monet {

/// Every knob of one experiment. Defaults mirror the toy benchmark settings.
struct ExperimentConfig {
  std::string model = "monet";  // monet | mrnn | vmnc | vmns | oracle | hard-selection
  int tasks = 5;
  long n_train = 500;
  long n_val = 250;
  long n_test = 250;
  std::uint64_t data_seed = 1;
  std::string train_csv;  // when set, data comes from CSV files instead of the toy generator
  std::string val_csv;
  std::string test_csv;

  int epochs = 500;
  long batch = 64;
  double lr = 5e-4;
  double lr_decay = 0.99;
  double selector_lr = 5e-3;
  double weight_decay = 0.0;
  int hidden = 64;
  int encoder_layers = 4;

  long orders = 0;     // M; 0 selects min(T!, 120)
  long dropout_k = 0;  // k; 0 selects max(1, ceil(5M/6))
  long warmup = 5;     // n
  std::string mask = "batch";         // batch | example
  std::string label_encoding = "signed";  // signed (2y-1) | literal (2(y-1))
  std::vector<int> order;             // fixed single order (1-based) for monet
  std::string objective = "mixture";  // mixture | expected

  int trajectories = 20;  // L
  int order_draws = 1;    // R
  double threshold = 0.5;
  std::uint64_t seed = 17;
  bool soft_order_dumps = true;

  long resolved_orders() const {
    if (!order.empty() || model == "oracle" || model == "mrnn") {
      return 1;
    }
    if (orders > 0) {
      return orders;
    }
    const std::uint64_t f = factorial(tasks);
    return static_cast<long>(std::min<std::uint64_t>(f, 120));
  }

  long resolved_dropout_k() const {
    const long m = resolved_orders();
    if (m == 1) {
      return 1;
    }
    if (dropout_k > 0) {
      return dropout_k;
    }
    return std::max(1L, static_cast<long>(std::ceil(5.0 * static_cast<double>(m) / 6.0)));
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch = batch;
    t.lr = lr;
    t.lr_decay = lr_decay;
    t.selector_lr = selector_lr;
    t.weight_decay = weight_decay;
    t.trajectories = trajectories;
    t.order_draws = order_draws;
    t.threshold = threshold;
    t.seed = seed;
    t.objective = objective == "expected" ? Objective::expected : Objective::mixture;
    return t;
  }

  void validate() const {
    static const std::vector<std::string> kinds = {"monet", "mrnn", "vmnc", "vmns", "oracle", "hard-selection"};
    if (std::find(kinds.begin(), kinds.end(), model) == kinds.end()) {
      throw ConfigError("model", "unknown model '" + model + "'");
    }
    if (tasks < 1) throw ConfigError("tasks", "must be >= 1");
    if (n_train < 1) throw ConfigError("n-train", "must be >= 1");
    if (n_val < 1) throw ConfigError("n-val", "must be >= 1");
    if (n_test < 1) throw ConfigError("n-test", "must be >= 1");
    if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
    if (batch < 1) throw ConfigError("batch", "must be >= 1");
    if (!(lr > 0)) throw ConfigError("lr", "must be > 0");
    if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr-decay", "must lie in (0, 1]");
    if (!(selector_lr > 0)) throw ConfigError("selector-lr", "must be > 0");
    if (weight_decay < 0) throw ConfigError("weight-decay", "must be >= 0");
    if (hidden < 1) throw ConfigError("hidden", "must be >= 1");
    if (encoder_layers < 1) throw ConfigError("encoder-layers", "must be >= 1");
    if (orders < 0) throw ConfigError("orders", "must be >= 0");
    if (dropout_k < 0) throw ConfigError("dropout-k", "must be >= 0");
    if (warmup < 0) throw ConfigError("warmup", "must be >= 0");
    if (trajectories < 1) throw ConfigError("trajectories", "must be >= 1");
    if (order_draws < 1) throw ConfigError("order-draws", "must be >= 1");
    if (!(threshold >= 0 && threshold <= 1)) throw ConfigError("threshold", "must lie in [0, 1]");
    if (mask != "batch" && mask != "example") throw ConfigError("mask", "must be 'batch' or 'example'");
    if (objective != "mixture" && objective != "expected") {
      throw ConfigError("objective", "must be 'mixture' or 'expected'");
    }
    if (label_encoding != "signed" && label_encoding != "literal") {
      throw ConfigError("label-encoding", "must be 'signed' or 'literal'");
    }
    const std::uint64_t cap = factorial(tasks);
    const long m = resolved_orders();
    if (static_cast<std::uint64_t>(m) > cap) {
      throw ConfigError("orders", "M = " + std::to_string(m) + " exceeds T! = " + std::to_string(cap));
    }
    const long k = resolved_dropout_k();
    if (k > m) {
      throw ConfigError("dropout-k", "k = " + std::to_string(k) + " exceeds M = " + std::to_string(m));
    }
    if (!order.empty()) {
      if (static_cast<int>(order.size()) != tasks) {
        throw ConfigError("order", "needs exactly " + std::to_string(tasks) + " entries");
      }
      try {
        (void)Permutation::from_one_based(order);
      } catch (const Error&) {
        throw ConfigError("order", "not a permutation of 1.." + std::to_string(tasks));
      }
    }
    if ((!train_csv.empty() || !val_csv.empty() || !test_csv.empty()) &&
        (train_csv.empty() || val_csv.empty() || test_csv.empty())) {
      throw ConfigError("train-csv", "train-csv, val-csv and test-csv must be given together");
    }
  }

  LabelEncoding encoding() const {
    return label_encoding == "literal" ? LabelEncoding::literal : LabelEncoding::signed_unit;
  }
  MaskGranularity granularity() const {
    return mask == "example" ? MaskGranularity::per_example : MaskGranularity::per_batch;
  }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    std::istringstream is(value);
    is.imbue(std::locale::classic());
    is >> out;
    if (!is || !is.eof()) {
      throw ConfigError(key, "expected a number, got '" + value + "'");
    }
  } else {
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw ConfigError(key, "expected an integer, got '" + value + "'");
    }
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::string cell;
  std::istringstream is(v);
  while (std::getline(is, cell, ',')) {
    out.push_back(parse_number<int>(key, trim(cell)));
  }
  return out;
}

}  // namespace detail

/// Applies one `key = value` setting. Keys use the long CLI option names.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  using detail::parse_number;
  const std::string v = detail::trim(raw);
  if (key == "model") c.model = v;
  else if (key == "tasks") c.tasks = parse_number<int>(key, v);
  else if (key == "n-train") c.n_train = parse_number<long>(key, v);
  else if (key == "n-val") c.n_val = parse_number<long>(key, v);
  else if (key == "n-test") c.n_test = parse_number<long>(key, v);
  else if (key == "data-seed") c.data_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "train-csv") c.train_csv = v;
  else if (key == "val-csv") c.val_csv = v;
  else if (key == "test-csv") c.test_csv = v;
  else if (key == "epochs") c.epochs = parse_number<int>(key, v);
  else if (key == "batch") c.batch = parse_number<long>(key, v);
  else if (key == "lr") c.lr = parse_number<double>(key, v);
  else if (key == "lr-decay") c.lr_decay = parse_number<double>(key, v);
  else if (key == "selector-lr") c.selector_lr = parse_number<double>(key, v);
  else if (key == "weight-decay") c.weight_decay = parse_number<double>(key, v);
  else if (key == "hidden") c.hidden = parse_number<int>(key, v);
  else if (key == "encoder-layers") c.encoder_layers = parse_number<int>(key, v);
  else if (key == "orders") c.orders = parse_number<long>(key, v);
  else if (key == "dropout-k") c.dropout_k = parse_number<long>(key, v);
  else if (key == "warmup") c.warmup = parse_number<long>(key, v);
  else if (key == "mask") c.mask = v;
  else if (key == "label-encoding") c.label_encoding = v;
  else if (key == "objective") c.objective = v;
  else if (key == "order") c.order = v.empty() ? std::vector<int>{} : detail::parse_int_list(key, v);
  else if (key == "trajectories") c.trajectories = parse_number<int>(key, v);
  else if (key == "order-draws") c.order_draws = parse_number<int>(key, v);
  else if (key == "threshold") c.threshold = parse_number<double>(key, v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "soft-order-dumps") c.soft_order_dumps = detail::parse_bool(key, v);
  else throw ConfigError(key, "unknown key");
}

/// Flat `key = value` text; `#` starts a comment.
inline void load_config_file(ExperimentConfig& c, std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = detail::trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(line_no, "expected 'key = value'");
    }
    set_config_value(c, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

inline void load_config_file(ExperimentConfig& c, const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("config", "cannot open " + path);
  }
  load_config_file(c, is);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"model", c.model},
          {"tasks", c.tasks},
          {"n_train", c.n_train},
          {"n_val", c.n_val},
          {"n_test", c.n_test},
          {"data_seed", c.data_seed},
          {"train_csv", c.train_csv},
          {"val_csv", c.val_csv},
          {"test_csv", c.test_csv},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"lr", c.lr},
          {"lr_decay", c.lr_decay},
          {"selector_lr", c.selector_lr},
          {"weight_decay", c.weight_decay},
          {"hidden", c.hidden},
          {"encoder_layers", c.encoder_layers},
          {"orders", c.resolved_orders()},
          {"dropout_k", c.resolved_dropout_k()},
          {"warmup", c.warmup},
          {"mask", c.mask},
          {"label_encoding", c.label_encoding},
          {"order", c.order},
          {"objective", c.objective},
          {"trajectories", c.trajectories},
          {"order_draws", c.order_draws},
          {"threshold", c.threshold},
          {"seed", c.seed},
          {"soft_order_dumps", c.soft_order_dumps}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.model = j.at("model").get<std::string>();
  c.tasks = j.at("tasks").get<int>();
  c.n_train = j.at("n_train").get<long>();
  c.n_val = j.at("n_val").get<long>();
  c.n_test = j.at("n_test").get<long>();
  c.data_seed = j.at("data_seed").get<std::uint64_t>();
  c.train_csv = j.value("train_csv", "");
  c.val_csv = j.value("val_csv", "");
  c.test_csv = j.value("test_csv", "");
  c.epochs = j.at("epochs").get<int>();
  c.batch = j.at("batch").get<long>();
  c.lr = j.at("lr").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.selector_lr = j.at("selector_lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.hidden = j.at("hidden").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.orders = j.at("orders").get<long>();
  c.dropout_k = j.at("dropout_k").get<long>();
  c.warmup = j.at("warmup").get<long>();
  c.mask = j.at("mask").get<std::string>();
  c.label_encoding = j.at("label_encoding").get<std::string>();
  c.order = j.at("order").get<std::vector<int>>();
  c.objective = j.value("objective", "mixture");
  c.trajectories = j.at("trajectories").get<int>();
  c.order_draws = j.at("order_draws").get<int>();
  c.threshold = j.at("threshold").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.soft_order_dumps = j.value("soft_order_dumps", true);
  return c;
}

}  // namespace monet
