#pragma once

#include <string>
#include <vector>

#include "monet/core/layers.hpp"
#include "monet/core/loss.hpp"
#include "monet/models/encoder.hpp"

namespace monet {

/// dense -> BN -> ReLU -> dense -> BN -> ReLU -> dense(out).
struct VmnHead {
  Dense d1;
  BatchNorm bn1;
  Dense d2;
  BatchNorm bn2;
  Dense out;

  struct Cache {
    Matrix in;
    Matrix a1;
    BatchNorm::Cache c1;
    Matrix b1;
    Matrix a2;
    BatchNorm::Cache c2;
    Matrix b2;
    Matrix a3;
  };

  VmnHead() = default;
  VmnHead(const std::string& name, Eigen::Index in, Eigen::Index width, Eigen::Index outputs, RngStream& rng)
      : d1(name + ".d1", in, width, rng),
        bn1(name + ".bn1", width),
        d2(name + ".d2", width, width, rng),
        bn2(name + ".bn2", width),
        out(name + ".out", width, outputs, rng) {}

  Matrix forward(const Matrix& x, Mode mode, Cache* c) {
    Cache local;
    Cache& k = c != nullptr ? *c : local;
    k.in = x;
    k.a1 = d1.forward(x);
    k.b1 = bn1.forward(k.a1, mode, &k.c1);
    k.a2 = d2.forward(relu(k.b1));
    k.b2 = bn2.forward(k.a2, mode, &k.c2);
    k.a3 = relu(k.b2);
    return out.forward(k.a3);
  }

  Matrix backward(const Cache& k, const Matrix& dlogits) {
    Matrix d = out.backward(k.a3, dlogits);
    d = bn2.backward(k.c2, relu_backward(k.b2, d));
    d = d2.backward(relu(k.b1), d);
    d = bn1.backward(k.c1, relu_backward(k.b1, d));
    return d1.backward(k.in, d);
  }

  std::vector<ParamBlock*> params() {
    std::vector<ParamBlock*> p;
    for (auto* block : {&d1.weight, &d1.bias, &bn1.scale, &bn1.shift, &d2.weight, &d2.bias, &bn2.scale, &bn2.shift,
                        &out.weight, &out.bias}) {
      p.push_back(block);
    }
    return p;
  }
};

/// Vanilla multi-task network: one shared head with T outputs (common) or
/// T single-output heads (separate).
struct VmnModel {
  bool separate = false;
  int tasks = 0;
  Encoder encoder;
  std::vector<VmnHead> heads;

  VmnModel() = default;
  VmnModel(bool separate_heads, Eigen::Index features, int task_count, Eigen::Index width, int encoder_depth,
           RngStream& rng)
      : separate(separate_heads), tasks(task_count), encoder(features, width, encoder_depth, rng) {
    if (separate) {
      for (int t = 0; t < tasks; ++t) {
        heads.emplace_back("head." + std::to_string(t), width, width, 1, rng);
      }
    } else {
      heads.emplace_back("head", width, width, tasks, rng);
    }
  }

  struct Cache {
    Encoder::Cache enc;
    std::vector<VmnHead::Cache> heads;
  };

  /// Returns logits (n x T).
  Matrix forward(const Matrix& x, Mode mode, Cache* cache = nullptr) {
    Cache local;
    Cache& c = cache != nullptr ? *cache : local;
    const Matrix features = encoder.forward(x, &c.enc);
    c.heads.resize(heads.size());
    if (!separate) {
      return heads[0].forward(features, mode, &c.heads[0]);
    }
    Matrix logits(x.rows(), tasks);
    for (int t = 0; t < tasks; ++t) {
      logits.col(t) = heads[static_cast<std::size_t>(t)].forward(features, mode, &c.heads[static_cast<std::size_t>(t)]);
    }
    return logits;
  }

  void backward(const Cache& c, const Matrix& dlogits) {
    Matrix dfeat;
    if (!separate) {
      dfeat = heads[0].backward(c.heads[0], dlogits);
    } else {
      for (int t = 0; t < tasks; ++t) {
        Matrix d = heads[static_cast<std::size_t>(t)].backward(c.heads[static_cast<std::size_t>(t)], dlogits.col(t));
        if (t == 0) {
          dfeat = std::move(d);
        } else {
          dfeat += d;
        }
      }
    }
    encoder.backward(c.enc, dfeat);
  }

  std::vector<ParamBlock*> params() {
    std::vector<ParamBlock*> p = encoder.params();
    for (VmnHead& h : heads) {
      for (ParamBlock* b : h.params()) {
        p.push_back(b);
      }
    }
    return p;
  }

  /// Summed BCE over examples and tasks; accumulates gradients when `backprop`.
  double loss(const Matrix& x, const Matrix& y, bool backprop) {
    Cache c;
    const Matrix logits = forward(x, Mode::train, &c);
    const double l = bce_with_logits(logits, y).sum();
    if (backprop) {
      backward(c, sigmoid(logits) - y);
    }
    return l;
  }

  Matrix predict(const Matrix& x) { return sigmoid(forward(x, Mode::eval)); }
};

/// Sum of BCE terms over examples and tasks.
inline double vmn_loss(const Matrix& logits, const Matrix& y) { return bce_with_logits(logits, y).sum(); }

}  // namespace monet
