#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "monet/experiment/run.hpp"

namespace monet {

// ---- statistics -------------------------------------------------------------

inline double mean(std::span<const double> v) {
  if (v.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) {
    return 0.0;
  }
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) {
    ss += (x - m) * (x - m);
  }
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// 1-based ranks; tied values share the average of their ranks.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
      ++j;
    }
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      ranks[idx[k]] = r;
    }
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ArityError("pearson: need two equally long samples of size >= 2");
  }
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return sab / std::sqrt(saa * sbb);
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

// ---- campaign runner ----------------------------------------------------------

/// One run of a campaign: a named configuration and its output subdirectory.
struct CampaignJob {
  std::string group;  // variant / model / order label
  ExperimentConfig config;
  std::string subdir;
};

struct CampaignOutcome {
  CampaignJob job;
  std::optional<RunReport> report;
  std::string error;
};

/// Runs jobs on up to `workers` threads. Each run owns its model, random
/// streams and output directory; outcomes come back in job order, so the
/// result does not depend on scheduling.
inline std::vector<CampaignOutcome> run_campaign(const std::vector<CampaignJob>& jobs,
                                                 const std::filesystem::path& out_root, unsigned workers,
                                                 const std::function<void(const CampaignOutcome&)>& on_done = {}) {
  for (const CampaignJob& j : jobs) {
    j.config.validate();
  }
  std::vector<CampaignOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      CampaignOutcome& o = outcomes[i];
      o.job = jobs[i];
      try {
        o.report = run(jobs[i].config, out_root.empty() ? std::filesystem::path{} : out_root / jobs[i].subdir);
      } catch (const std::exception& e) {
        o.error = e.what();
      }
      if (on_done) {
        std::lock_guard<std::mutex> lock(done_mutex);
        on_done(o);
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1))));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back(worker);
    }
    for (std::thread& t : pool) {
      t.join();
    }
  }
  return outcomes;
}

inline std::vector<std::uint64_t> seed_list(std::uint64_t first, int count) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < count; ++i) {
    s.push_back(first + static_cast<std::uint64_t>(i));
  }
  return s;
}

/// Per-group aggregate over seeds.
struct GroupSummary {
  std::string group;
  int runs = 0;
  int failures = 0;
  std::vector<double> mean_accuracy;             // one per successful run
  std::vector<std::vector<double>> task_accuracy;  // run x task
  int identity_found = 0;

  double accuracy_mean() const { return mean(mean_accuracy); }
  double accuracy_std() const { return stddev(mean_accuracy); }
  std::vector<double> task_means() const {
    if (task_accuracy.empty()) {
      return {};
    }
    std::vector<double> out(task_accuracy.front().size(), 0.0);
    for (const auto& row : task_accuracy) {
      for (std::size_t t = 0; t < out.size(); ++t) {
        out[t] += row[t] / static_cast<double>(task_accuracy.size());
      }
    }
    return out;
  }
};

/// Groups outcomes by `job.group`, keeping first-appearance order.
inline std::vector<GroupSummary> summarise(const std::vector<CampaignOutcome>& outcomes) {
  std::vector<GroupSummary> groups;
  std::map<std::string, std::size_t> where;
  for (const CampaignOutcome& o : outcomes) {
    auto it = where.find(o.job.group);
    if (it == where.end()) {
      it = where.emplace(o.job.group, groups.size()).first;
      groups.emplace_back();
      groups.back().group = o.job.group;
    }
    GroupSummary& g = groups[it->second];
    ++g.runs;
    if (!o.report) {
      ++g.failures;
      continue;
    }
    g.mean_accuracy.push_back(o.report->test.mean_accuracy);
    std::vector<double> per_task;
    for (const TaskMetrics& t : o.report->test.tasks) {
      per_task.push_back(t.accuracy);
    }
    g.task_accuracy.push_back(std::move(per_task));
    g.identity_found += o.report->identity_found ? 1 : 0;
  }
  return groups;
}

inline nlohmann::json to_json(const GroupSummary& g) {
  return {{"group", g.group},
          {"runs", g.runs},
          {"failures", g.failures},
          {"mean_accuracy", detail::nan_to_null(g.accuracy_mean())},
          {"std_accuracy", g.accuracy_std()},
          {"task_accuracy", g.task_means()},
          {"identity_found", g.identity_found},
          {"per_seed_accuracy", g.mean_accuracy}};
}

inline std::vector<std::string> failure_lines(const std::vector<CampaignOutcome>& outcomes) {
  std::vector<std::string> out;
  for (const CampaignOutcome& o : outcomes) {
    if (!o.report) {
      out.push_back(o.job.subdir + ": " + o.error);
    }
  }
  return out;
}

// ---- the three reproduction campaigns ------------------------------------------

inline std::string seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

/// Table-2 variants: hard selection and the four warm-up / dropout combinations.
inline std::vector<CampaignJob> ablation_jobs(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds) {
  struct Variant {
    std::string name;
    std::string model;
    bool warmup;
    bool dropout;
  };
  const std::vector<Variant> variants = {{"hard-selection", "hard-selection", true, false},
                                         {"no-warmup-no-dropout", "monet", false, false},
                                         {"warmup-only", "monet", true, false},
                                         {"dropout-only", "monet", false, true},
                                         {"warmup-dropout", "monet", true, true}};
  std::vector<CampaignJob> jobs;
  for (const Variant& v : variants) {
    for (std::uint64_t s : seeds) {
      ExperimentConfig c = base;
      c.model = v.model;
      c.order.clear();
      c.seed = s;
      if (!v.warmup) {
        c.warmup = 0;
      }
      if (!v.dropout) {
        c.dropout_k = c.resolved_orders();
      }
      jobs.push_back({v.name, c, v.name + "/" + seed_dir(s)});
    }
  }
  return jobs;
}

/// Table-3 models on the same data.
inline std::vector<CampaignJob> baseline_jobs(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                                              const std::vector<std::string>& models = {"vmnc", "vmns", "mrnn",
                                                                                        "monet", "oracle"}) {
  std::vector<CampaignJob> jobs;
  for (const std::string& m : models) {
    for (std::uint64_t s : seeds) {
      ExperimentConfig c = base;
      c.model = m;
      c.order.clear();
      c.seed = s;
      jobs.push_back({m, c, m + "/" + seed_dir(s)});
    }
  }
  return jobs;
}

/// Orders for the single-order sweep: every permutation for T <= 4, otherwise
/// a sample of `per_distance` orders per distance to the identity (all of them
/// when fewer exist), drawn from the "sweep-orders" stream.
inline std::vector<Permutation> sweep_orders_for(int tasks, int per_distance, std::uint64_t seed) {
  if (tasks < 1 || tasks > 8) {
    throw ConfigError("tasks", "order sweep supports 1 <= T <= 8");
  }
  std::vector<Permutation> all = all_permutations(tasks);
  if (tasks <= 4) {
    return all;
  }
  std::map<int, std::vector<Permutation>> by_distance;
  for (Permutation& p : all) {
    by_distance[p.moved_points()].push_back(std::move(p));
  }
  RngStream rng(seed, "sweep-orders");
  std::vector<Permutation> out;
  for (auto& [moved, perms] : by_distance) {
    rng.shuffle(perms);
    const std::size_t take = std::min<std::size_t>(perms.size(), static_cast<std::size_t>(per_distance));
    std::vector<Permutation> chosen(perms.begin(), perms.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(chosen.begin(), chosen.end());
    out.insert(out.end(), chosen.begin(), chosen.end());
  }
  return out;
}

inline std::string order_label(const Permutation& p) {
  std::string s;
  for (int v : p.one_based()) {
    s += std::to_string(v);
  }
  return s;
}

inline std::vector<CampaignJob> sweep_jobs(const ExperimentConfig& base, const std::vector<Permutation>& orders,
                                           const std::vector<std::uint64_t>& seeds) {
  std::vector<CampaignJob> jobs;
  for (const Permutation& p : orders) {
    for (std::uint64_t s : seeds) {
      ExperimentConfig c = base;
      c.model = "monet";
      c.order = p.one_based();
      c.seed = s;
      c.soft_order_dumps = false;
      jobs.push_back({order_label(p), c, "order-" + order_label(p) + "/" + seed_dir(s)});
    }
  }
  return jobs;
}

struct SweepRow {
  Permutation order;
  double distance = 0.0;
  GroupSummary summary;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double spearman = std::numeric_limits<double>::quiet_NaN();
  bool identity_best = false;  // identity strictly above every other order
};

inline SweepResult summarise_sweep(const std::vector<Permutation>& orders, const std::vector<CampaignOutcome>& outcomes) {
  SweepResult res;
  const auto groups = summarise(outcomes);
  std::map<std::string, const GroupSummary*> by_label;
  for (const GroupSummary& g : groups) {
    by_label[g.group] = &g;
  }
  std::vector<double> dist;
  std::vector<double> acc;
  for (const Permutation& p : orders) {
    SweepRow row{p, distance_to_identity(p), *by_label.at(order_label(p))};
    if (!row.summary.mean_accuracy.empty()) {
      dist.push_back(row.distance);
      acc.push_back(row.summary.accuracy_mean());
    }
    res.rows.push_back(std::move(row));
  }
  if (dist.size() >= 2) {
    res.spearman = spearman(dist, acc);
  }
  double identity = -1.0;
  double best_other = -1.0;
  for (const SweepRow& r : res.rows) {
    if (r.summary.mean_accuracy.empty()) {
      continue;
    }
    if (r.order.is_identity()) {
      identity = r.summary.accuracy_mean();
    } else {
      best_other = std::max(best_other, r.summary.accuracy_mean());
    }
  }
  res.identity_best = identity >= 0.0 && identity > best_other;
  return res;
}

inline void write_sweep_csv(const SweepResult& r, std::ostream& os) {
  os << "order,frobenius_sq,mean_accuracy,std_accuracy,seeds,failures\n";
  for (const SweepRow& row : r.rows) {
    os << order_label(row.order) << ',' << detail::format_double(row.distance) << ','
       << (row.summary.mean_accuracy.empty() ? std::string() : detail::format_double(row.summary.accuracy_mean()))
       << ',' << detail::format_double(row.summary.accuracy_std()) << ',' << row.summary.mean_accuracy.size() << ','
       << row.summary.failures << '\n';
  }
}

/// `group,runs,failures,mean_accuracy,std_accuracy,identity_found,task_1..task_T`
inline void write_groups_csv(const std::vector<GroupSummary>& groups, std::ostream& os) {
  std::size_t tasks = 0;
  for (const GroupSummary& g : groups) {
    tasks = std::max(tasks, g.task_means().size());
  }
  os << "group,runs,failures,mean_accuracy,std_accuracy,identity_found";
  for (std::size_t t = 0; t < tasks; ++t) {
    os << ",task_" << (t + 1);
  }
  os << '\n';
  for (const GroupSummary& g : groups) {
    os << g.group << ',' << g.runs << ',' << g.failures << ','
       << (g.mean_accuracy.empty() ? std::string() : detail::format_double(g.accuracy_mean())) << ','
       << detail::format_double(g.accuracy_std()) << ',' << g.identity_found;
    const auto tm = g.task_means();
    for (std::size_t t = 0; t < tasks; ++t) {
      os << ',' << (t < tm.size() ? detail::format_double(tm[t]) : std::string());
    }
    os << '\n';
  }
}

}  // namespace monet
