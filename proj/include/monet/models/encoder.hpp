#pragma once

#include <string>
#include <vector>

#include "monet/core/layers.hpp"

namespace monet {

/// Stack of dense + ReLU layers shared by every architecture.
struct Encoder {
  std::vector<Dense> layers;

  struct Cache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
  };

  Encoder() = default;
  Encoder(Eigen::Index input, Eigen::Index width, int depth, RngStream& rng) {
    for (int l = 0; l < depth; ++l) {
      layers.emplace_back("encoder." + std::to_string(l), l == 0 ? input : width, width, rng);
    }
  }

  Eigen::Index output_width() const { return layers.back().out_dim(); }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    Matrix a = x;
    if (cache != nullptr) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    for (const Dense& layer : layers) {
      Matrix z = layer.forward(a);
      if (cache != nullptr) {
        cache->inputs.push_back(std::move(a));
        cache->pre.push_back(z);
      }
      a = relu(z);
    }
    return a;
  }

  void backward(const Cache& cache, Matrix dout) {
    for (std::size_t l = layers.size(); l-- > 0;) {
      const Matrix dz = relu_backward(cache.pre[l], dout);
      dout = layers[l].backward(cache.inputs[l], dz);
    }
  }

  std::vector<ParamBlock*> params() {
    std::vector<ParamBlock*> out;
    for (Dense& d : layers) {
      for (ParamBlock* p : d.params()) {
        out.push_back(p);
      }
    }
    return out;
  }
};

}  // namespace monet
