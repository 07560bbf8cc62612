// monet: command-line harness for training, campaigns and evaluation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "monet/experiment/campaign.hpp"
#include "monet/experiment/run.hpp"

namespace fs = std::filesystem;
using namespace monet;

namespace {

constexpr int kOk = 0;
constexpr int kRunFailure = 1;
constexpr int kConfigError = 2;

const std::vector<std::string> kConfigKeys = {
    "model",  "tasks",   "n-train",  "n-val",         "n-test",     "data-seed",    "train-csv",
    "val-csv", "test-csv", "epochs",  "batch",         "lr",         "lr-decay",     "selector-lr",
    "weight-decay", "hidden", "encoder-layers", "orders", "dropout-k", "warmup",    "mask",
    "label-encoding", "objective", "order", "trajectories", "order-draws", "threshold", "seed", "soft-order-dumps"};

/// Config file, `--set key=value` pairs and per-key options, applied in that order.
struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", file, "flat key = value config file");
    app->add_option("--set", sets, "override as key=value (repeatable)");
    for (const std::string& k : kConfigKeys) {
      app->add_option("--" + k, values[k], "config key '" + k + "'");
    }
  }

  ExperimentConfig resolve(CLI::App* app) const {
    ExperimentConfig c;
    if (!file.empty()) {
      load_config_file(c, file);
    }
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(s, "--set expects key=value");
      }
      set_config_value(c, detail::trim(s.substr(0, eq)), s.substr(eq + 1));
    }
    for (const std::string& k : kConfigKeys) {
      if (app->count("--" + k) > 0) {
        set_config_value(c, k, values.at(k));
      }
    }
    c.validate();
    return c;
  }
};

fs::path output_root() {
  const char* env = std::getenv("MONET_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("monet-runs");
}

fs::path resolve_out(const std::string& out, const std::string& fallback) {
  const fs::path p = out.empty() ? fs::path(fallback) : fs::path(out);
  return p.is_absolute() ? p : output_root() / p;
}

unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

void print_failures(const std::vector<CampaignOutcome>& outcomes) {
  const auto lines = failure_lines(outcomes);
  if (!lines.empty()) {
    std::cerr << lines.size() << " of " << outcomes.size() << " runs failed:\n";
    for (const std::string& l : lines) {
      std::cerr << "  " << l << '\n';
    }
  }
}

std::function<void(const CampaignOutcome&)> progress_printer(std::size_t total) {
  auto done = std::make_shared<std::size_t>(0);
  return [done, total](const CampaignOutcome& o) {
    ++*done;
    std::cerr << '[' << *done << '/' << total << "] " << o.job.subdir;
    if (o.report) {
      std::cerr << " mean_accuracy=" << o.report->test.mean_accuracy;
      if (o.report->selected_order) {
        std::cerr << " order=" << o.report->selected_order->str();
      }
    } else {
      std::cerr << " FAILED: " << o.error;
    }
    std::cerr << '\n';
  };
}

nlohmann::json groups_json(const std::vector<GroupSummary>& groups) {
  nlohmann::json out = nlohmann::json::array();
  for (const GroupSummary& g : groups) {
    out.push_back(to_json(g));
  }
  return out;
}

template <typename F>
void write_stream(const fs::path& path, F&& body) {
  std::ostringstream os;
  body(os);
  write_text(path, os.str());
}

int cmd_run(const ExperimentConfig& c, const std::string& out, bool verbose) {
  const fs::path dir = resolve_out(out, c.model + "-seed-" + std::to_string(c.seed));
  std::function<void(const std::string&)> progress;
  if (verbose) {
    progress = [](const std::string& line) { std::cerr << line << '\n'; };
  }
  const RunReport r = run(c, dir, progress);
  nlohmann::json summary = {{"out_dir", dir.string()},
                            {"mean_accuracy", r.test.mean_accuracy},
                            {"task_accuracy", nlohmann::json::array()},
                            {"selected_order", r.selected_order ? nlohmann::json(r.selected_order->one_based())
                                                                : nlohmann::json(nullptr)},
                            {"identity_found", r.identity_found}};
  for (const TaskMetrics& t : r.test.tasks) {
    summary["task_accuracy"].push_back(t.accuracy);
  }
  std::cout << summary.dump(2) << '\n';
  return kOk;
}

int finish_campaign(const fs::path& dir, const std::string& kind, const ExperimentConfig& base,
                    const std::vector<std::uint64_t>& seeds, const std::vector<CampaignOutcome>& outcomes,
                    nlohmann::json extra, const std::string& csv_name,
                    const std::function<void(std::ostream&)>& csv) {
  write_stream(dir / csv_name, csv);
  nlohmann::json summary = {{"format", "monet-campaign/1"},
                            {"campaign", kind},
                            {"base_config", to_json(base)},
                            {"seeds", seeds},
                            {"failures", failure_lines(outcomes)}};
  summary.update(extra);
  write_text(dir / "summary.json", summary.dump(2));
  std::cout << summary.dump(2) << '\n';
  print_failures(outcomes);
  return failure_lines(outcomes).empty() ? kOk : kRunFailure;
}

int cmd_sweep(const ExperimentConfig& base, const std::string& out, int seeds_n, std::uint64_t first_seed,
              int per_distance, unsigned workers) {
  const fs::path dir = resolve_out(out, "sweep-orders-T" + std::to_string(base.tasks));
  const auto seeds = seed_list(first_seed, seeds_n);
  const auto orders = sweep_orders_for(base.tasks, per_distance, base.data_seed);
  const auto jobs = sweep_jobs(base, orders, seeds);
  const auto outcomes = run_campaign(jobs, dir, workers, progress_printer(jobs.size()));
  const SweepResult res = summarise_sweep(orders, outcomes);
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepRow& r : res.rows) {
    rows.push_back({{"order", r.order.one_based()},
                    {"frobenius_sq", r.distance},
                    {"mean_accuracy", detail::nan_to_null(r.summary.accuracy_mean())},
                    {"std_accuracy", r.summary.accuracy_std()},
                    {"per_seed_accuracy", r.summary.mean_accuracy}});
  }
  return finish_campaign(dir, "sweep-orders", base, seeds, outcomes,
                         {{"rows", rows},
                          {"spearman", detail::nan_to_null(res.spearman)},
                          {"identity_best", res.identity_best}},
                         "sweep.csv", [&](std::ostream& os) { write_sweep_csv(res, os); });
}

int cmd_groups(const std::string& kind, const std::vector<CampaignJob>& jobs, const ExperimentConfig& base,
               const std::vector<std::uint64_t>& seeds, const fs::path& dir, unsigned workers) {
  const auto outcomes = run_campaign(jobs, dir, workers, progress_printer(jobs.size()));
  const auto groups = summarise(outcomes);
  return finish_campaign(dir, kind, base, seeds, outcomes, {{"groups", groups_json(groups)}}, kind + ".csv",
                         [&](std::ostream& os) { write_groups_csv(groups, os); });
}

int cmd_gen_toy(const ExperimentConfig& c, const std::string& out) {
  const fs::path dir = resolve_out(out, "toy-T" + std::to_string(c.tasks) + "-seed-" + std::to_string(c.data_seed));
  fs::create_directories(dir);
  const DatasetSplit s = gen_toy(ToySpec{c.tasks, c.n_train, c.n_val, c.n_test, c.data_seed});
  write_csv(s.train, (dir / "train.csv").string());
  write_csv(s.val, (dir / "val.csv").string());
  write_csv(s.test, (dir / "test.csv").string());
  std::cout << nlohmann::json{{"out_dir", dir.string()},
                              {"tasks", c.tasks},
                              {"train", s.train.size()},
                              {"val", s.val.size()},
                              {"test", s.test.size()}}
                   .dump(2)
            << '\n';
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& csv, const std::string& out, int trajectories,
             int order_draws, std::uint64_t seed) {
  std::ifstream is(checkpoint);
  if (!is) {
    throw ConfigError("checkpoint", "cannot open " + checkpoint);
  }
  LoadedCheckpoint ck = load_checkpoint(nlohmann::json::parse(is));
  const Dataset data = csv.empty() ? load_data(ck.config).test : load_csv(csv);
  if (data.tasks() != ck.model.tasks()) {
    throw ConfigError("test-csv", "dataset has " + std::to_string(data.tasks()) + " tasks, model " +
                                      std::to_string(ck.model.tasks()));
  }
  const int l = trajectories > 0 ? trajectories : ck.config.trajectories;
  const int r = order_draws > 0 ? order_draws : ck.config.order_draws;
  RngStream rng = RngStream(seed, "trajectory-sampling").child("eval");
  const MetricsReport m = score_predictions(predict(ck.model, data.x, l, r, rng), data.y, ck.config.threshold);
  const nlohmann::json j = {{"format", "monet-eval/1"},
                            {"checkpoint", checkpoint},
                            {"data", csv.empty() ? std::string("test split of the checkpoint config") : csv},
                            {"trajectories", l},
                            {"order_draws", r},
                            {"seed", seed},
                            {"metrics", m}};
  if (!out.empty()) {
    const fs::path dir = resolve_out(out, out);
    fs::create_directories(dir);
    write_text(dir / "eval.json", j.dump(2));
  }
  std::cout << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MONET multi-order network: training, campaigns and evaluation"};
  app.require_subcommand(1);

  std::string out;
  bool verbose = false;
  int seeds_n = 10;
  std::uint64_t first_seed = 1;
  int per_distance = 3;
  unsigned workers = default_workers();
  std::vector<std::string> models = {"vmnc", "vmns", "mrnn", "monet", "oracle"};

  ConfigArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "train and evaluate one model");
  run_args.attach(run_cmd);
  run_cmd->add_option("-o,--out", out, "output directory (relative to $MONET_OUTPUT_ROOT)");
  run_cmd->add_flag("-v,--verbose", verbose, "print per-epoch JSON log lines to stderr");

  ConfigArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep-orders", "single-order accuracy against distance to the identity");
  sweep_args.attach(sweep_cmd);
  sweep_cmd->add_option("-o,--out", out, "output directory");
  sweep_cmd->add_option("--seeds", seeds_n, "number of seeds per order")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--first-seed", first_seed, "first seed of the consecutive seed list");
  sweep_cmd->add_option("--per-distance", per_distance, "orders per distance value when T > 4")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("-j,--workers", workers, "concurrent runs")->check(CLI::PositiveNumber);

  ConfigArgs abl_args;
  auto* abl_cmd = app.add_subcommand("ablation", "order-selection variants over seeds");
  abl_args.attach(abl_cmd);
  abl_cmd->add_option("-o,--out", out, "output directory");
  abl_cmd->add_option("--seeds", seeds_n, "number of seeds")->check(CLI::PositiveNumber);
  abl_cmd->add_option("--first-seed", first_seed, "first seed");
  abl_cmd->add_option("-j,--workers", workers, "concurrent runs")->check(CLI::PositiveNumber);

  ConfigArgs base_args;
  auto* base_cmd = app.add_subcommand("baselines", "multi-task baselines over seeds");
  base_args.attach(base_cmd);
  base_cmd->add_option("-o,--out", out, "output directory");
  base_cmd->add_option("--seeds", seeds_n, "number of seeds")->check(CLI::PositiveNumber);
  base_cmd->add_option("--first-seed", first_seed, "first seed");
  base_cmd->add_option("--models", models, "models to compare")
      ->check(CLI::IsMember({"vmnc", "vmns", "mrnn", "monet", "oracle", "hard-selection"}));
  base_cmd->add_option("-j,--workers", workers, "concurrent runs")->check(CLI::PositiveNumber);

  ConfigArgs toy_args;
  auto* toy_cmd = app.add_subcommand("gen-toy", "write the toy benchmark as train/val/test CSV files");
  toy_args.attach(toy_cmd);
  toy_cmd->add_option("-o,--out", out, "output directory");

  std::string checkpoint;
  std::string eval_csv;
  int eval_l = 0;
  int eval_r = 0;
  std::uint64_t eval_seed = 17;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("checkpoint", checkpoint, "checkpoint.json written by run")->required();
  eval_cmd->add_option("--data", eval_csv, "CSV to evaluate (default: the checkpoint's test split)");
  eval_cmd->add_option("--trajectories", eval_l, "override L");
  eval_cmd->add_option("--order-draws", eval_r, "override R");
  eval_cmd->add_option("--seed", eval_seed, "sampling seed");
  eval_cmd->add_option("-o,--out", out, "directory for eval.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) {
      return cmd_run(run_args.resolve(run_cmd), out, verbose);
    }
    if (*sweep_cmd) {
      return cmd_sweep(sweep_args.resolve(sweep_cmd), out, seeds_n, first_seed, per_distance, workers);
    }
    if (*abl_cmd) {
      const ExperimentConfig base = abl_args.resolve(abl_cmd);
      const auto seeds = seed_list(first_seed, seeds_n);
      return cmd_groups("ablation", ablation_jobs(base, seeds), base, seeds,
                        resolve_out(out, "ablation-T" + std::to_string(base.tasks)), workers);
    }
    if (*base_cmd) {
      const ExperimentConfig base = base_args.resolve(base_cmd);
      const auto seeds = seed_list(first_seed, seeds_n);
      return cmd_groups("baselines", baseline_jobs(base, seeds, models), base, seeds,
                        resolve_out(out, "baselines-T" + std::to_string(base.tasks)), workers);
    }
    if (*toy_cmd) {
      return cmd_gen_toy(toy_args.resolve(toy_cmd), out);
    }
    if (*eval_cmd) {
      return cmd_eval(checkpoint, eval_csv, out, eval_l, eval_r, eval_seed);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error [" << e.field() << "]: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError& e) {
    std::cerr << "config error (line " << e.line() << "): " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kRunFailure;
  }
  return kConfigError;
}
