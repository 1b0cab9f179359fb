#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "arec/error.hpp"
#include "arec/nn/graph.hpp"
#include "arec/nn/ops.hpp"

namespace arec::nn {

/// Per-head attention probabilities: probs[h](t, j), zero for masked keys.
template <typename T>
struct AttentionProbs {
  std::vector<Tensor<T>> per_head;
};

/// softmax(Q_h K_hᵀ / √(d/h)) under a causal mask plus a key-validity mask.
/// Masked logits are treated as −∞, so their weight is exactly 0. A query row
/// with no valid key gets an all-zero row.
template <typename T>
AttentionProbs<T> causal_attention_probs(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads,
                                         const std::vector<std::uint8_t>& key_valid) {
  const std::size_t n = q.rows(), d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (!q.same_shape(k) || key_valid.size() != n) throw DimensionError("attention: q/k/mask shape mismatch");
  const std::size_t dh = d / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  AttentionProbs<T> out;
  std::vector<T> logits(n);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor<T> p = Tensor<T>::matrix(n, n);
    for (std::size_t t = 0; t < n; ++t) {
      const T* qt = q.data() + t * d + h * dh;
      T mx{};
      bool any = false;
      for (std::size_t j = 0; j <= t; ++j) {
        if (!key_valid[j]) continue;
        const T* kj = k.data() + j * d + h * dh;
        T s{0};
        for (std::size_t c = 0; c < dh; ++c) s += qt[c] * kj[c];
        logits[j] = s * scale;
        mx = any ? std::max(mx, logits[j]) : logits[j];
        any = true;
      }
      if (!any) continue;
      T z{0};
      for (std::size_t j = 0; j <= t; ++j) {
        if (!key_valid[j]) continue;
        p(t, j) = std::exp(logits[j] - mx);
        z += p(t, j);
      }
      for (std::size_t j = 0; j <= t; ++j) p(t, j) /= z;
    }
    out.per_head.push_back(std::move(p));
  }
  return out;
}

/// Fused multi-head causal attention core: per head P·V_h, heads concatenated.
template <typename T>
Var<T> causal_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads,
                        std::vector<std::uint8_t> key_valid) {
  Graph<T>& g = *q.graph;
  const auto& qv = q.value();
  const auto& vv = v.value();
  if (!qv.same_shape(vv)) throw DimensionError("attention: v shape mismatch");
  auto probs = causal_attention_probs(qv, k.value(), heads, key_valid);
  const std::size_t n = qv.rows(), d = qv.cols(), dh = d / heads;
  Tensor<T> out = Tensor<T>::matrix(n, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor<T>& p = probs.per_head[h];
    for (std::size_t t = 0; t < n; ++t) {
      T* ot = out.data() + t * d + h * dh;
      for (std::size_t j = 0; j <= t; ++j) {
        const T w = p(t, j);
        if (w == T{0}) continue;
        const T* vj = vv.data() + j * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) ot[c] += w * vj[c];
      }
    }
  }
  return g.record(
      "causal_attention", std::move(out), g.requires_grad({q, k, v}),
      [q, k, v, heads, probs = std::move(probs)](Graph<T>& g, Var<T> self) {
        const Tensor<T>& go = *g.grad(self);
        const auto& qv = q.value();
        const auto& kv = k.value();
        const auto& vv = v.value();
        Tensor<T>* gq = g.grad(q);
        Tensor<T>* gk = g.grad(k);
        Tensor<T>* gv = g.grad(v);
        const std::size_t n = qv.rows(), d = qv.cols(), dh = d / heads;
        const T scale = T{1} / std::sqrt(static_cast<T>(dh));
        std::vector<T> dp(n);
        for (std::size_t h = 0; h < heads; ++h) {
          const Tensor<T>& p = probs.per_head[h];
          for (std::size_t t = 0; t < n; ++t) {
            const T* got = go.data() + t * d + h * dh;
            T weighted{0};
            for (std::size_t j = 0; j <= t; ++j) {
              const T w = p(t, j);
              if (w == T{0}) {
                dp[j] = T{0};
                continue;
              }
              const T* vj = vv.data() + j * d + h * dh;
              T s{0};
              for (std::size_t c = 0; c < dh; ++c) s += got[c] * vj[c];
              dp[j] = s;
              weighted += w * s;
              if (gv) {
                T* gvj = gv->data() + j * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) gvj[c] += w * got[c];
              }
            }
            for (std::size_t j = 0; j <= t; ++j) {
              const T w = p(t, j);
              if (w == T{0}) continue;
              const T ds = w * (dp[j] - weighted) * scale;
              if (gq) {
                const T* kj = kv.data() + j * d + h * dh;
                T* gqt = gq->data() + t * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) gqt[c] += ds * kj[c];
              }
              if (gk) {
                const T* qt = qv.data() + t * d + h * dh;
                T* gkj = gk->data() + j * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qt[c];
              }
            }
          }
        }
      });
}

/// Projection weights of one multi-head self-attention sublayer.
template <typename T>
struct AttentionParams {
  Parameter<T>* wq;
  Parameter<T>* bq;
  Parameter<T>* wk;  // no key bias: it shifts every logit of a row equally
  Parameter<T>* wv;
  Parameter<T>* bv;
  Parameter<T>* wo;
  Parameter<T>* bo;
};

/// Causal multi-head self-attention over x[n×d]: project to Q, K, V, attend
/// per head, concatenate, project back.
template <typename T>
Var<T> masked_self_attention(Var<T> x, const AttentionParams<T>& p, std::size_t heads,
                             std::vector<std::uint8_t> key_valid) {
  Graph<T>& g = *x.graph;
  if (heads == 0 || x.cols() % heads != 0) {
    throw ConfigError("attention width " + std::to_string(x.cols()) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  auto q = linear(x, g.param(*p.wq), g.param(*p.bq));
  auto k = matmul(x, g.param(*p.wk));
  auto v = linear(x, g.param(*p.wv), g.param(*p.bv));
  auto ctx = causal_attention(q, k, v, heads, std::move(key_valid));
  return linear(ctx, g.param(*p.wo), g.param(*p.bo));
}

}  // namespace arec::nn
