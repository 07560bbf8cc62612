#pragma once

#include <vector>

#include <json.hpp>

#include "monet/core/errors.hpp"
#include "monet/core/matrix.hpp"

namespace monet {

struct TaskMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;
};

struct MetricsReport {
  std::vector<TaskMetrics> tasks;
  double mean_accuracy = 0.0;
  long examples = 0;
};

/// Binarises `probs` at `threshold` (ties positive) and scores against `y`.
inline MetricsReport score_predictions(const Matrix& probs, const Matrix& y, double threshold = 0.5) {
  require_same_shape(probs, y, "score_predictions");
  if (y.rows() == 0) {
    throw ArityError("score_predictions: empty dataset");
  }
  MetricsReport rep;
  rep.examples = static_cast<long>(y.rows());
  for (Eigen::Index t = 0; t < y.cols(); ++t) {
    TaskMetrics m;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const bool pred = probs(i, t) >= threshold;
      const bool truth = y(i, t) != 0.0;
      m.tp += pred && truth;
      m.fp += pred && !truth;
      m.tn += !pred && !truth;
      m.fn += !pred && truth;
    }
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(rep.examples);
    const long denom = 2 * m.tp + m.fp + m.fn;
    m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(m.tp) / static_cast<double>(denom);
    rep.mean_accuracy += m.accuracy;
    rep.tasks.push_back(m);
  }
  rep.mean_accuracy /= static_cast<double>(y.cols());
  return rep;
}

inline void to_json(nlohmann::json& j, const TaskMetrics& m) {
  j = {{"accuracy", m.accuracy}, {"f1", m.f1}, {"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
}

inline void from_json(const nlohmann::json& j, TaskMetrics& m) {
  m.accuracy = j.at("accuracy").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.tp = j.at("tp").get<long>();
  m.fp = j.at("fp").get<long>();
  m.tn = j.at("tn").get<long>();
  m.fn = j.at("fn").get<long>();
}

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"mean_accuracy", r.mean_accuracy}, {"examples", r.examples}, {"tasks", r.tasks}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& r) {
  r.mean_accuracy = j.at("mean_accuracy").get<double>();
  r.examples = j.at("examples").get<long>();
  r.tasks = j.at("tasks").get<std::vector<TaskMetrics>>();
}

}  // namespace monet
