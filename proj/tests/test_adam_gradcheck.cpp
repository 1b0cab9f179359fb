#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "arec/nn/adam.hpp"
#include "arec/nn/grad_check.hpp"
#include "arec/nn/init.hpp"
#include "arec/nn/ops.hpp"

using namespace arec;
using namespace arec::nn;

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  ParameterSet<float> ps;
  auto& w = ps.add("w", Tensor<float>::from_rows({{1.5f, -2.0f}, {0.25f, 3.0f}}));
  const auto before = w.value;
  Adam<float> opt(ps, {});
  for (int i = 0; i < 5; ++i) opt.step(ps);
  EXPECT_EQ(w.value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m̂ = g = 1, v̂ = g² = 1, so the step is lr / (1 + eps).
  ParameterSet<double> ps;
  auto& w = ps.add("w", Tensor<double>::matrix(1, 1, 2.0));
  Adam<double> opt(ps, {.lr = 0.1});
  w.grad[0] = 1.0;
  opt.step(ps);
  EXPECT_NEAR(w.value[0], 2.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(w.grad[0], 0.0);
  EXPECT_EQ(opt.state().step, 1u);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParameterSet<float> ps;
  ps.add("first", Tensor<float>::matrix(1, 2));
  auto& bad = ps.add("culprit", Tensor<float>::matrix(2, 2));
  bad.grad[3] = std::numeric_limits<float>::quiet_NaN();
  Adam<float> opt(ps, {});
  try {
    opt.step(ps);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("culprit"), std::string::npos);
  }
  EXPECT_EQ(bad.value[0], 0.0f);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    ParameterSet<float> ps;
    Rng rng(5);
    auto& w = ps.add("w", init::xavier_uniform<float>(4, 3, rng));
    Adam<float> opt(ps, {.lr = 0.01});
    const auto x = init::normal<float>(2, 4, 1.0, rng);
    for (int s = 0; s < 30; ++s) {
      Graph<float> g({true, static_cast<std::uint64_t>(s)});
      auto h = dropout(matmul(g.constant(x), g.param(w)), 0.2);
      auto loss = bce_with_logits(h, std::vector<float>(6, 1.0f), std::vector<float>(6, 1.0f));
      g.backward(loss);
      opt.step(ps);
    }
    return w.value;
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, ReportsWrongGradient) {
  ParameterSet<double> ps;
  auto& w = ps.add("w", Tensor<double>::from_rows({{0.5, -1.0, 2.0}}));
  // Loss Σ w² with a deliberately halved analytic gradient.
  LossFn<double> fn = [&](bool with_grad) {
    double s = 0;
    for (double v : w.value.values()) s += v * v;
    if (with_grad)
      for (std::size_t i = 0; i < 3; ++i) w.grad[i] += w.value[i];
    return s;
  };
  auto r = grad_check(fn, ps);
  EXPECT_NEAR(r.max_rel_error, 0.5, 1e-6);
  EXPECT_EQ(r.worst_parameter, "w");
  EXPECT_EQ(r.coordinates, 3u);
}

TEST(GradCheck, SamplesBoundedCoordinateCount) {
  ParameterSet<double> ps;
  auto& w = ps.add("w", Tensor<double>::matrix(10, 10, 0.5));
  LossFn<double> fn = [&](bool with_grad) {
    Graph<double> g;
    auto loss = sum(g.param(w));
    if (with_grad) g.backward(loss);
    return loss.value()[0];
  };
  auto r = grad_check(fn, ps, 1e-4, 7);
  EXPECT_EQ(r.coordinates, 7u);
  EXPECT_LT(r.max_rel_error, 1e-9);
}
