#pragma once

#include <string>
#include <variant>

#include "monet/inference/sampling.hpp"
#include "monet/models/chain.hpp"
#include "monet/models/vmn.hpp"

namespace monet {

enum class ModelKind { vmnc, vmns, mrnn, monet };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::vmnc:
      return "vmnc";
    case ModelKind::vmns:
      return "vmns";
    case ModelKind::mrnn:
      return "mrnn";
    case ModelKind::monet:
      return "monet";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "vmnc") return ModelKind::vmnc;
  if (s == "vmns") return ModelKind::vmns;
  if (s == "mrnn") return ModelKind::mrnn;
  if (s == "monet") return ModelKind::monet;
  throw ConfigError("model", "unknown model kind '" + s + "'");
}

/// Any of the four architectures.
struct Model {
  ModelKind kind = ModelKind::monet;
  std::variant<VmnModel, ChainModel> net;

  bool is_chain() const { return std::holds_alternative<ChainModel>(net); }
  ChainModel& chain() { return std::get<ChainModel>(net); }
  const ChainModel& chain() const { return std::get<ChainModel>(net); }
  VmnModel& vmn() { return std::get<VmnModel>(net); }

  int tasks() const {
    return std::visit([](const auto& m) { return m.tasks; }, net);
  }

  std::vector<ParamBlock*> params() {
    return std::visit([](auto& m) { return m.params(); }, net);
  }
};

/// Per-task probability estimates (n x T) in [0, 1]. Chain models use
/// Monte-Carlo marginals; vanilla networks predict directly and ignore L, R.
inline Matrix predict(Model& model, const Matrix& x, int trajectories, int order_draws, RngStream& rng) {
  if (model.is_chain()) {
    return predict_marginals(model.chain(), x, trajectories, order_draws, rng);
  }
  return model.vmn().predict(x);
}

}  // namespace monet
