#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "monet/core/gradcheck.hpp"
#include "monet/core/gru.hpp"
#include "monet/core/layers.hpp"
#include "monet/core/loss.hpp"
#include "monet/core/optim.hpp"
#include "monet/core/rng.hpp"

using namespace monet;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.uniform(-scale, scale);
  }
  return m;
}

}  // namespace

TEST(Dense, IdentityPassesInputThrough) {
  RngStream rng(1, "t");
  Dense d("d", 2, 2, rng);
  d.weight.value = Matrix::Identity(2, 2);
  Matrix x(1, 2);
  x << 3, -1;
  EXPECT_EQ(d.forward(x), x);
}

TEST(Dense, HandProduct) {
  RngStream rng(1, "t");
  Dense d("d", 2, 1, rng);
  d.weight.value << 1, 1;
  d.bias.value << 0.5;
  Matrix x(1, 2);
  x << 1, 2;
  EXPECT_DOUBLE_EQ(d.forward(x)(0, 0), 3.5);
}

TEST(Dense, ShapeErrorNamesBothShapes) {
  RngStream rng(1, "t");
  Dense d("d", 2, 1, rng);
  try {
    d.forward(Matrix::Zero(1, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1x3"), std::string::npos);
    EXPECT_NE(msg.find("2x1"), std::string::npos);
  }
}

TEST(BatchNorm, UnitVarianceColumnIsNearlyUnchanged) {
  BatchNorm bn("bn", 1);
  Matrix x(2, 1);
  x << -1, 1;
  const Matrix y = bn.forward(x, Mode::train);
  const double expected = 1.0 / std::sqrt(1.0 + BatchNorm::kEps);
  EXPECT_NEAR(y(0, 0), -expected, 1e-15);
  EXPECT_NEAR(y(1, 0), expected, 1e-15);
}

TEST(BatchNorm, DegenerateAffine) {
  BatchNorm bn("bn", 2);
  bn.scale.value.setZero();
  bn.shift.value.setConstant(3.0);
  RngStream rng(2, "t");
  const Matrix y = bn.forward(random_matrix(5, 2, rng), Mode::train);
  EXPECT_TRUE((y.array() == 3.0).all());
}

TEST(BatchNorm, EvalBeforeTrainIsAnError) {
  BatchNorm bn("bn", 2);
  EXPECT_THROW(bn.forward(Matrix::Zero(1, 2), Mode::eval), StateError);
}

TEST(BatchNorm, EvalWithUnitStatisticsIsTheAffineMap) {
  BatchNorm bn("bn", 2);
  bn.has_running_stats = true;
  bn.running_mean.setZero();
  bn.running_var.setOnes();
  bn.scale.value << 2, -1;
  bn.shift.value << 0.5, 0.25;
  RngStream rng(3, "t");
  const Matrix x = random_matrix(4, 2, rng);
  const Matrix y = bn.forward(x, Mode::eval);
  const double s = 1.0 / std::sqrt(1.0 + BatchNorm::kEps);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(y(i, 0), 2 * x(i, 0) * s + 0.5, 1e-14);
    EXPECT_NEAR(y(i, 1), -x(i, 1) * s + 0.25, 1e-14);
  }
}

TEST(Gru, ZeroParametersHalveTheState) {
  RngStream rng(4, "t");
  GruCell cell("g", 3, 4, rng);
  for (ParamBlock* p : cell.params()) {
    p->value.setZero();
  }
  const Matrix h = random_matrix(2, 4, rng);
  const Matrix x = random_matrix(2, 3, rng);
  const Matrix out = gru_step(cell, h, x);
  EXPECT_TRUE(out.isApprox(0.5 * h, 1e-15));
}

TEST(Gru, SaturatedCandidateBias) {
  RngStream rng(5, "t");
  GruCell cell("g", 2, 3, rng);
  for (ParamBlock* p : cell.params()) {
    p->value.setZero();
  }
  const double bias = 4.0;
  cell.input_bias.value.rightCols(3).setConstant(bias);
  const Matrix out = gru_step(cell, Matrix::Zero(1, 3), Matrix::Zero(1, 2));
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_NEAR(out(0, j), 0.5 * std::tanh(bias), 1e-15);
  }
}

TEST(Gru, Deterministic) {
  RngStream rng(6, "t");
  GruCell cell("g", 3, 5, rng);
  const Matrix h = random_matrix(4, 5, rng);
  const Matrix x = random_matrix(4, 3, rng);
  EXPECT_EQ(gru_step(cell, h, x), gru_step(cell, h, x));
}

TEST(Gru, ShapeMismatch) {
  RngStream rng(7, "t");
  GruCell cell("g", 3, 5, rng);
  EXPECT_THROW(gru_step(cell, Matrix::Zero(1, 4), Matrix::Zero(1, 3)), ShapeError);
  EXPECT_THROW(gru_step(cell, Matrix::Zero(1, 5), Matrix::Zero(1, 2)), ShapeError);
}

TEST(Bce, KnownValues) {
  EXPECT_NEAR(bce_with_logits(0.0, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logits(0.0, 0.0), std::log(2.0), 1e-15);
  const double tail = bce_with_logits(50.0, 0.0);
  EXPECT_TRUE(std::isfinite(tail));
  EXPECT_NEAR(tail, 50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(bce_with_logits(-800.0, 1.0)));
}

TEST(Bce, RejectsNonBinaryLabel) { EXPECT_THROW(bce_with_logits(0.1, 0.5), LabelError); }

TEST(Bce, MatchesNaiveLikelihoodForModerateLogits) {
  RngStream rng(8, "t");
  for (int i = 0; i < 2000; ++i) {
    const double l = rng.uniform(-20.0, 20.0);
    const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double p = 1.0 / (1.0 + std::exp(-l));
    const double q = 1.0 / (1.0 + std::exp(l));
    const double naive = -(y * std::log(p) + (1 - y) * std::log(q));
    EXPECT_NEAR(bce_with_logits(l, y), naive, 1e-9) << "logit " << l << " label " << y;
  }
}

TEST(LogSumExp, Basics) {
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_NEAR(logsumexp(zeros), std::log(2.0), 1e-15);
  const std::vector<double> one{-3.25};
  EXPECT_EQ(logsumexp(one), -3.25);
  const std::vector<double> big{1000.0, 1000.0};
  EXPECT_NEAR(logsumexp(big), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_THROW(logsumexp(std::vector<double>{}), ArityError);
}

TEST(LogSumExp, TranslationEquivariant) {
  RngStream rng(9, "t");
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(1 + rng.index(8));
    for (double& x : v) {
      x = rng.uniform(-5.0, 5.0);
    }
    const double c = rng.uniform(-5.0, 5.0);
    std::vector<double> shifted(v);
    for (double& x : shifted) {
      x += c;
    }
    EXPECT_NEAR(logsumexp(shifted), logsumexp(v) + c, 1e-12);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamBlock b("w", Matrix::Constant(1, 1, 1.0));
  b.grad(0, 0) = 2.0;
  adam_step(b, 0.1);
  EXPECT_NEAR(b.value(0, 0), 1.0 - 0.1, 1e-8);
  EXPECT_EQ(b.grad(0, 0), 0.0);
  EXPECT_EQ(b.step, 1);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  RngStream rng(10, "t");
  ParamBlock b("w", random_matrix(3, 3, rng));
  const Matrix before = b.value;
  adam_step(b, 0.01);
  EXPECT_EQ(b.value, before);
}

TEST(Adam, DecoupledWeightDecay) {
  RngStream rng(11, "t");
  ParamBlock b("w", random_matrix(2, 3, rng));
  const Matrix before = b.value;
  adam_step(b, 0.01, AdamHyper{}, 0.5);
  EXPECT_TRUE(b.value.isApprox(before * (1.0 - 0.01 * 0.5), 1e-15));
}

TEST(Adam, NonFiniteGradientNamesBlock) {
  ParamBlock b("encoder.0.W", Matrix::Zero(1, 2));
  b.grad(0, 1) = std::nan("");
  try {
    adam_step(b, 0.01);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.0.W"), std::string::npos);
  }
}

TEST(ExpDecay, Values) {
  EXPECT_DOUBLE_EQ(exp_decay(5e-4, 0.99, 0), 5e-4);
  EXPECT_NEAR(exp_decay(5e-4, 0.99, 100), 1.830163e-4, 1e-9);
  EXPECT_DOUBLE_EQ(exp_decay(0.3, 1.0, 77), 0.3);
}

TEST(Rng, SameSeedAndLabelReproduce) {
  RngStream a(42, "shuffle");
  RngStream b(42, "shuffle");
  RngStream c(42, "dropout-mask");
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    differs |= va != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformIndexIsUnbiased) {
  RngStream rng(3, "idx");
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) {
    ++counts[rng.index(6)];
  }
  for (int c : counts) {
    EXPECT_NEAR(c, 10000, 400);
  }
}

TEST(FiniteDiff, QuadraticLoss) {
  RngStream rng(12, "t");
  ParamBlock w("w", random_matrix(3, 4, rng));
  w.grad = w.value;  // d/dw 1/2 |w|^2
  ParamBlock* blocks[] = {&w};
  const double err = finite_diff_check([&] { return 0.5 * w.value.squaredNorm(); }, blocks);
  EXPECT_LE(err, 1e-7);
}

TEST(FiniteDiff, ConstantLoss) {
  ParamBlock w("w", Matrix::Ones(2, 2));
  ParamBlock* blocks[] = {&w};
  EXPECT_EQ(finite_diff_check([] { return 1.5; }, blocks), 0.0);
}

TEST(FiniteDiff, DenseBatchNormGruComposition) {
  RngStream rng(13, "t");
  Dense d("d", 3, 6, rng);
  BatchNorm bn("bn", 6);
  bn.scale.value = random_matrix(1, 6, rng) + Matrix::Ones(1, 6);
  bn.shift.value = random_matrix(1, 6, rng);
  GruCell cell("g", 2, 6, rng);
  for (ParamBlock* p : {&cell.input_bias, &cell.hidden_bias}) {
    p->value = random_matrix(1, 18, rng, 0.5);
  }
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix in = random_matrix(5, 2, rng);
  const Matrix target = random_matrix(5, 6, rng);

  const auto loss = [&](bool backprop) {
    BatchNorm::Cache bc;
    GruCell::Cache gc;
    const Matrix a = d.forward(x);
    const Matrix b = bn.forward(a, Mode::train, &bc);
    const Matrix h = b.array().tanh().matrix();
    const Matrix out = cell.forward(h, in, &gc);
    const Matrix diff = out - target;
    if (backprop) {
      Matrix dh = cell.backward(gc, diff);
      Matrix db = dh.cwiseProduct((1.0 - h.array().square()).matrix());
      d.backward(x, bn.backward(bc, db));
    }
    return 0.5 * diff.squaredNorm();
  };
  loss(true);
  std::vector<ParamBlock*> blocks = {&d.weight, &d.bias, &bn.scale, &bn.shift};
  for (ParamBlock* p : cell.params()) {
    blocks.push_back(p);
  }
  const double err = finite_diff_check([&] { return loss(false); }, blocks, GradCheckOptions{1e-4, 40});
  EXPECT_LE(err, 1e-5);
}
