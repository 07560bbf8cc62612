#pragma once

#include <string>
#include <vector>

#include "monet/core/errors.hpp"
#include "monet/core/matrix.hpp"
#include "monet/core/param.hpp"
#include "monet/core/rng.hpp"

namespace monet {

/// Gated recurrent unit. Gate columns are laid out [update | reset | candidate]:
///
///   z  = sigmoid(x Wz + bz_x + h Uz + bz_h)
///   r  = sigmoid(x Wr + br_x + h Ur + br_h)
///   n  = tanh(x Wn + bn_x + r * (h Un + bn_h))
///   h' = (1 - z) * n + z * h
struct GruCell {
  ParamBlock input_weight;   // in x 3H
  ParamBlock hidden_weight;  // H x 3H
  ParamBlock input_bias;     // 1 x 3H
  ParamBlock hidden_bias;    // 1 x 3H

  struct Cache {
    Matrix x;
    Matrix h;
    Matrix z;
    Matrix r;
    Matrix n;
    Matrix hn;  // h Un + bn_h
  };

  GruCell() = default;
  GruCell(const std::string& name, Eigen::Index input_size, Eigen::Index hidden_size, RngStream& rng)
      : input_weight(ParamBlock::glorot(name + ".Wx", input_size, 3 * hidden_size, rng)),
        hidden_weight(ParamBlock::glorot(name + ".Wh", hidden_size, 3 * hidden_size, rng)),
        input_bias(ParamBlock::zeros(name + ".bx", 1, 3 * hidden_size)),
        hidden_bias(ParamBlock::zeros(name + ".bh", 1, 3 * hidden_size)) {}

  Eigen::Index input_size() const { return input_weight.value.rows(); }
  Eigen::Index hidden_size() const { return hidden_weight.value.rows(); }

  Matrix forward(const Matrix& h, const Matrix& x, Cache* cache = nullptr) const {
    const Eigen::Index hs = hidden_size();
    if (h.cols() != hs || x.cols() != input_size() || h.rows() != x.rows()) {
      throw ShapeError("gru '" + input_weight.name + "': h " + shape_str(h) + ", x " + shape_str(x) +
                       " for input " + std::to_string(input_size()) + ", hidden " + std::to_string(hs));
    }
    Matrix gx = x * input_weight.value;
    gx.rowwise() += input_bias.value.row(0);
    Matrix gh = h * hidden_weight.value;
    gh.rowwise() += hidden_bias.value.row(0);

    Matrix z = sigmoid(Matrix(gx.leftCols(hs) + gh.leftCols(hs)));
    Matrix r = sigmoid(Matrix(gx.middleCols(hs, hs) + gh.middleCols(hs, hs)));
    Matrix hn = gh.rightCols(hs);
    Matrix n = (gx.rightCols(hs) + r.cwiseProduct(hn)).array().tanh().matrix();
    Matrix out = n + z.cwiseProduct(h - n);
    if (cache != nullptr) {
      cache->x = x;
      cache->h = h;
      cache->z = std::move(z);
      cache->r = std::move(r);
      cache->n = std::move(n);
      cache->hn = std::move(hn);
    }
    return out;
  }

  /// Accumulates parameter gradients; returns dL/dh (the input gradient is
  /// not needed by any caller since the label channel is data).
  Matrix backward(const Cache& c, const Matrix& dout) {
    const Eigen::Index hs = hidden_size();
    const Eigen::Index rows = dout.rows();
    const Matrix dz = dout.cwiseProduct(c.h - c.n);
    const Matrix dn = dout - dout.cwiseProduct(c.z);
    const Matrix dan = dn.array() * (1.0 - c.n.array().square());
    const Matrix daz = dz.array() * c.z.array() * (1.0 - c.z.array());
    const Matrix dr = dan.cwiseProduct(c.hn);
    const Matrix dar = dr.array() * c.r.array() * (1.0 - c.r.array());

    Matrix dgx(rows, 3 * hs);
    dgx << daz, dar, dan;
    Matrix dgh(rows, 3 * hs);
    dgh << daz, dar, dan.cwiseProduct(c.r);

    input_weight.grad.noalias() += c.x.transpose() * dgx;
    input_bias.grad.row(0) += dgx.colwise().sum();
    hidden_weight.grad.noalias() += c.h.transpose() * dgh;
    hidden_bias.grad.row(0) += dgh.colwise().sum();

    Matrix dh = dout.cwiseProduct(c.z);
    dh.noalias() += dgh * hidden_weight.value.transpose();
    return dh;
  }

  std::vector<ParamBlock*> params() { return {&input_weight, &hidden_weight, &input_bias, &hidden_bias}; }
};

/// Convenience free function matching the single-step contract.
inline Matrix gru_step(const GruCell& cell, const Matrix& h, const Matrix& x) { return cell.forward(h, x); }

}  // namespace monet
