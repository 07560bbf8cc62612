#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "monet/experiment/campaign.hpp"
#include "monet/experiment/run.hpp"

using namespace monet;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& model = "monet") {
  ExperimentConfig c;
  c.model = model;
  c.tasks = 3;
  c.n_train = 120;
  c.n_val = 60;
  c.n_test = 60;
  c.epochs = 4;
  c.batch = 32;
  c.hidden = 8;
  c.encoder_layers = 2;
  c.warmup = 1;
  c.trajectories = 4;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("monet-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string without_runtime(const std::string& report) {
  nlohmann::json j = nlohmann::json::parse(report);
  j.erase("runtime_seconds");
  return j.dump();
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsMatchToySettings) {
  const ExperimentConfig c;
  EXPECT_EQ(c.tasks, 5);
  EXPECT_EQ(c.resolved_orders(), 120);
  EXPECT_EQ(c.resolved_dropout_k(), 100);
  EXPECT_EQ(c.warmup, 5);
  EXPECT_EQ(c.epochs, 500);
  EXPECT_EQ(c.batch, 64);
  EXPECT_DOUBLE_EQ(c.lr, 5e-4);
  EXPECT_DOUBLE_EQ(c.lr_decay, 0.99);
  EXPECT_DOUBLE_EQ(c.selector_lr, 5e-3);
  EXPECT_EQ(c.trajectories, 20);
  EXPECT_EQ(c.seed, 17u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ValidationNamesTheField) {
  ExperimentConfig c;
  c.dropout_k = 121;
  EXPECT_EQ(field_of([&] { c.validate(); }), "dropout-k");
  c = ExperimentConfig{};
  c.tasks = 3;
  c.orders = 7;
  EXPECT_EQ(field_of([&] { c.validate(); }), "orders");
  c = ExperimentConfig{};
  c.mask = "row";
  EXPECT_EQ(field_of([&] { c.validate(); }), "mask");
  c = ExperimentConfig{};
  c.order = {1, 1, 2, 3, 4};
  EXPECT_EQ(field_of([&] { c.validate(); }), "order");
  EXPECT_EQ(field_of([&] { set_config_value(c, "epochz", "3"); }), "epochz");
  EXPECT_EQ(field_of([&] { set_config_value(c, "lr", "fast"); }), "lr");
}

TEST(Config, FileAndOverrides) {
  ExperimentConfig c;
  std::istringstream in("# toy\n tasks = 4\norders=12 # trailing\n\ndropout-k = 10\norder = 1,2,3,4\n");
  load_config_file(c, in);
  EXPECT_EQ(c.tasks, 4);
  EXPECT_EQ(c.orders, 12);
  EXPECT_EQ(c.dropout_k, 10);
  EXPECT_EQ(c.order, (std::vector<int>{1, 2, 3, 4}));
  std::istringstream bad("tasks = 4\njunk\n");
  try {
    load_config_file(c, bad);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = small_config();
  c.order = {2, 1, 3};
  c.objective = "expected";
  c.mask = "example";
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Stats, RanksAndCorrelation) {
  const std::vector<double> v{3.0, 1.0, 3.0, 2.0};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{3.5, 1.0, 3.5, 2.0}));
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{10, 8, 6, 4, 1};
  EXPECT_NEAR(spearman(a, b), -1.0, 1e-15);
  const std::vector<double> c{1, 4, 9, 16, 25};
  EXPECT_NEAR(spearman(a, c), 1.0, 1e-15);
  EXPECT_THROW(pearson(std::vector<double>{1.0}, std::vector<double>{2.0}), ArityError);
  EXPECT_NEAR(stddev(std::vector<double>{1, 2, 3, 4}), std::sqrt(5.0 / 3.0), 1e-15);
}

TEST(Sweep, ThreeTasksCoverEveryOrder) {
  const auto orders = sweep_orders_for(3, 3, 1);
  ASSERT_EQ(orders.size(), 6u);
  std::set<double> distances;
  for (const Permutation& p : orders) {
    distances.insert(distance_to_identity(p));
  }
  EXPECT_EQ(distances, (std::set<double>{0.0, 4.0, 6.0}));
}

TEST(Sweep, FiveTasksStratified) {
  const auto orders = sweep_orders_for(5, 3, 1);
  std::map<double, int> per_distance;
  for (const Permutation& p : orders) {
    ++per_distance[distance_to_identity(p)];
  }
  EXPECT_EQ(per_distance.size(), 5u);
  EXPECT_EQ(per_distance[0.0], 1);
  for (const auto& [d, n] : per_distance) {
    if (d > 0.0) {
      EXPECT_EQ(n, 3) << "distance " << d;
    }
  }
  EXPECT_EQ(sweep_orders_for(5, 3, 1), orders);
}

TEST(Run, WritesArtifactsThatRoundTrip) {
  const fs::path dir = scratch("run");
  const RunReport r = run(small_config(), dir);
  for (const char* f : {"report.json", "history.csv", "epochs.jsonl", "checkpoint.json",
                        "soft_order_epoch_0000.json", "soft_order_epoch_0003.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(r.history.size(), 4u);
  const nlohmann::json j = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(j.at("format"), "monet-report/1");
  EXPECT_EQ(to_json(report_from_json(j)), j);

  std::istringstream hist(slurp(dir / "history.csv"));
  std::string header;
  std::getline(hist, header);
  EXPECT_EQ(header, "epoch,loss,val_accuracy,frobenius_to_identity");

  const nlohmann::json dump = nlohmann::json::parse(slurp(dir / "soft_order_epoch_0003.json"));
  EXPECT_TRUE(is_doubly_stochastic(dump.at("soft_order").get<SoftOrder>()));
  fs::remove_all(dir);
}

TEST(Run, SameSeedSameReport) {
  const fs::path a = scratch("det-a");
  const fs::path b = scratch("det-b");
  run(small_config(), a);
  run(small_config(), b);
  EXPECT_EQ(without_runtime(slurp(a / "report.json")), without_runtime(slurp(b / "report.json")));
  EXPECT_EQ(slurp(a / "checkpoint.json"), slurp(b / "checkpoint.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, CheckpointReproducesPredictions) {
  for (const char* model : {"monet", "vmnc", "vmns"}) {
    ExperimentConfig c = small_config(model);
    RunArtifacts art = run_experiment(c);
    const nlohmann::json ck = nlohmann::json::parse(checkpoint_json(art.model, c, art.data.train.features()).dump());
    LoadedCheckpoint back = load_checkpoint(ck);
    RngStream ra(3, "eval");
    RngStream rb(3, "eval");
    EXPECT_EQ(predict(art.model, art.data.test.x, 4, 1, ra), predict(back.model, art.data.test.x, 4, 1, rb)) << model;
  }
}

TEST(Campaign, InterleavingDoesNotChangeReports) {
  const auto jobs = baseline_jobs(small_config(), seed_list(1, 2), {"monet", "mrnn"});
  const auto serial = run_campaign(jobs, {}, 1);
  const auto concurrent = run_campaign(jobs, {}, 4);
  ASSERT_EQ(serial.size(), 4u);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    ASSERT_TRUE(serial[i].report && concurrent[i].report);
    EXPECT_EQ(to_json(*serial[i].report, false), to_json(*concurrent[i].report, false));
  }
}

TEST(Campaign, FailuresAreCollected) {
  std::vector<CampaignJob> jobs = baseline_jobs(small_config(), seed_list(1, 1), {"vmnc"});
  CampaignJob bad = jobs.front();
  bad.config.train_csv = "/nonexistent/train.csv";
  bad.config.val_csv = "/nonexistent/val.csv";
  bad.config.test_csv = "/nonexistent/test.csv";
  bad.subdir = "broken";
  jobs.push_back(bad);
  const auto outcomes = run_campaign(jobs, {}, 1);
  const auto lines = failure_lines(outcomes);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines.front().rfind("broken: ", 0), 0u);
  const auto groups = summarise(outcomes);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups.front().runs, 2);
  EXPECT_EQ(groups.front().failures, 1);
}

TEST(Campaign, AblationVariants) {
  const auto jobs = ablation_jobs(ExperimentConfig{}, seed_list(1, 2));
  ASSERT_EQ(jobs.size(), 10u);
  std::map<std::string, const ExperimentConfig*> first;
  for (const CampaignJob& j : jobs) {
    first.emplace(j.group, &j.config);
  }
  EXPECT_EQ(first.at("hard-selection")->model, "hard-selection");
  EXPECT_EQ(first.at("no-warmup-no-dropout")->warmup, 0);
  EXPECT_EQ(first.at("no-warmup-no-dropout")->dropout_k, 120);
  EXPECT_EQ(first.at("warmup-only")->dropout_k, 120);
  EXPECT_EQ(first.at("dropout-only")->warmup, 0);
  EXPECT_EQ(first.at("dropout-only")->resolved_dropout_k(), 100);
  EXPECT_EQ(first.at("warmup-dropout")->warmup, 5);
  EXPECT_EQ(first.at("warmup-dropout")->resolved_dropout_k(), 100);
}

TEST(Campaign, CsvHeaders) {
  GroupSummary g{"vmnc", 2, 0, {0.8, 0.9}, {{0.9, 0.8}, {1.0, 0.8}}, 0};
  std::ostringstream os;
  write_groups_csv({g}, os);
  std::istringstream in(os.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "group,runs,failures,mean_accuracy,std_accuracy,identity_found,task_1,task_2");
}
