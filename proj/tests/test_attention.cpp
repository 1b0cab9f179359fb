#include <gtest/gtest.h>

#include <vector>

#include "arec/nn/attention.hpp"
#include "arec/nn/grad_check.hpp"
#include "arec/nn/init.hpp"

using namespace arec;
using namespace arec::nn;

namespace {

template <typename T>
struct AttentionFixture {
  ParameterSet<T> ps;
  AttentionParams<T> p{};

  explicit AttentionFixture(std::size_t d, std::uint64_t seed = 1) {
    Rng rng(seed);
    auto mat = [&](const char* n) { return &ps.add(n, init::xavier_uniform<T>(d, d, rng)); };
    auto vec = [&](const char* n) { return &ps.add(n, init::normal<T>(1, d, 0.1, rng)); };
    p.wq = mat("wq");
    p.bq = vec("bq");
    p.wk = mat("wk");
    p.wv = mat("wv");
    p.bv = vec("bv");
    p.wo = mat("wo");
    p.bo = vec("bo");
  }
};

Tensor<double> random_input(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> x = Tensor<double>::matrix(n, d);
  for (auto& v : x.values()) v = rng.normal();
  return x;
}

}  // namespace

TEST(CausalAttention, SinglePositionAttendsToItself) {
  auto q = Tensor<double>::from_rows({{0.3, -2.0, 1.0, 0.5}});
  auto probs = causal_attention_probs(q, q, 2, {1});
  ASSERT_EQ(probs.per_head.size(), 2u);
  for (const auto& p : probs.per_head) EXPECT_EQ(p(0, 0), 1.0);
}

TEST(CausalAttention, UniformInputsGiveHarmonicWeights) {
  Tensor<double> q(Shape{3, 4}, 0.7);
  auto probs = causal_attention_probs(q, q, 1, {1, 1, 1});
  const auto& p = probs.per_head[0];
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(p(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(1, 1), 0.5);
  EXPECT_DOUBLE_EQ(p(1, 2), 0.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p(2, j), 1.0 / 3.0, 1e-15);
}

TEST(CausalAttention, PaddedKeysGetExactlyZeroWeight) {
  auto q = random_input(4, 4, 3);
  auto probs = causal_attention_probs(q, q, 2, {0, 0, 1, 1});
  for (const auto& p : probs.per_head) {
    for (std::size_t t = 0; t < 4; ++t) {
      EXPECT_EQ(p(t, 0), 0.0);
      EXPECT_EQ(p(t, 1), 0.0);
    }
    EXPECT_EQ(p(0, 2), 0.0);  // row with no valid key
    EXPECT_EQ(p(2, 2), 1.0);
  }
}

TEST(CausalAttention, HeadCountMustDivideWidth) {
  AttentionFixture<float> f(6);
  Graph<float> g;
  auto x = g.constant(Tensor<float>::matrix(2, 6));
  EXPECT_THROW(masked_self_attention(x, f.p, 4, {1, 1}), ConfigError);
}

TEST(CausalAttention, FuturePerturbationLeavesPastBitIdentical) {
  AttentionFixture<float> f(8, 4);
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    Tensor<float> x = Tensor<float>::matrix(n, 8);
    for (auto& v : x.values()) v = static_cast<float>(rng.normal());
    const std::size_t t = rng.below(n - 1);
    Tensor<float> y = x;
    for (std::size_t r = t + 1; r < n; ++r)
      for (auto& v : y.row(r)) v = static_cast<float>(rng.normal(0, 10));
    std::vector<std::uint8_t> valid(n, 1);
    Graph<float> g1, g2;
    auto a = masked_self_attention(g1.constant(x), f.p, 2, valid).value();
    auto b = masked_self_attention(g2.constant(y), f.p, 2, valid).value();
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t c = 0; c < 8; ++c) ASSERT_EQ(a(r, c), b(r, c)) << "row " << r;
  }
}

TEST(CausalAttention, GradientMatchesFiniteDifferences) {
  AttentionFixture<double> f(6, 9);
  auto& x = f.ps.add("x", random_input(5, 6, 21));
  const auto proj = random_input(5, 6, 22);
  LossFn<double> fn = [&](bool with_grad) {
    Graph<double> g;
    auto out = masked_self_attention(g.param(x), f.p, 3, {0, 1, 1, 1, 1});
    auto loss = sum(row_dot(out, g.constant(proj)));
    if (with_grad) g.backward(loss);
    return loss.value()[0];
  };
  auto r = grad_check(fn, f.ps, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_parameter << "[" << r.worst_index << "]";
}
