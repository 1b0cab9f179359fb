#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arec/error.hpp"
#include "arec/nn/graph.hpp"
#include "arec/nn/rng.hpp"
#include "arec/nn/tensor.hpp"

namespace arec::nn {

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src, T alpha = T{1}) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += alpha * s[i];
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(av.shape()) + " by " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  return g.record("matmul", nn::matmul(av, bv), g.requires_grad({a, b}),
                  [a, b, m, k, n](Graph<T>& g, Var<T> self) {
                    const Tensor<T>& go = *g.grad(self);
                    if (Tensor<T>* ga = g.grad(a))
                      kernel::gemm_nt_acc(go.data(), b.value().data(), ga->data(), m, n, k);
                    if (Tensor<T>* gb = g.grad(b))
                      kernel::gemm_tn_acc(a.value().data(), go.data(), gb->data(), m, k, n);
                  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  detail::require_same_shape("add", a.value(), b.value());
  Tensor<T> out = a.value();
  detail::axpy(out, b.value());
  return g.record("add", std::move(out), g.requires_grad({a, b}), [a, b](Graph<T>& g, Var<T> self) {
    const Tensor<T>& go = *g.grad(self);
    if (Tensor<T>* ga = g.grad(a)) detail::axpy(*ga, go);
    if (Tensor<T>* gb = g.grad(b)) detail::axpy(*gb, go);
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Graph<T>& g = *a.graph;
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return g.record("scale", std::move(out), g.requires_grad(a), [a, factor](Graph<T>& g, Var<T> self) {
    if (Tensor<T>* ga = g.grad(a)) detail::axpy(*ga, *g.grad(self), factor);
  });
}

/// a[m×n] + row[1×n] broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  Graph<T>& g = *a.graph;
  const auto& av = a.value();
  const auto& rv = row.value();
  if (rv.rank() != 2 || rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: bias " + shape_string(rv.shape()) + " does not fit " +
                         shape_string(av.shape()));
  }
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += rv[j];
  }
  return g.record("add_row", std::move(out), g.requires_grad({a, row}),
                  [a, row](Graph<T>& g, Var<T> self) {
                    const Tensor<T>& go = *g.grad(self);
                    if (Tensor<T>* ga = g.grad(a)) detail::axpy(*ga, go);
                    if (Tensor<T>* gr = g.grad(row)) {
                      for (std::size_t i = 0; i < go.rows(); ++i) {
                        auto r = go.row(i);
                        for (std::size_t j = 0; j < r.size(); ++j) (*gr)[j] += r[j];
                      }
                    }
                  });
}

/// x·W + b.
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  return add_row(matmul(x, weight), bias);
}

/// Multiplies row i by the constant mask[i] (0/1 padding masks).
template <typename T>
Var<T> mask_rows(Var<T> a, std::vector<T> mask) {
  Graph<T>& g = *a.graph;
  const auto& av = a.value();
  if (mask.size() != av.rows()) throw DimensionError("mask_rows: mask length != rows");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (auto& v : out.row(i)) v *= mask[i];
  return g.record("mask_rows", std::move(out), g.requires_grad(a),
                  [a, mask = std::move(mask)](Graph<T>& g, Var<T> self) {
                    Tensor<T>* ga = g.grad(a);
                    const Tensor<T>& go = *g.grad(self);
                    for (std::size_t i = 0; i < go.rows(); ++i) {
                      if (mask[i] == T{0}) continue;
                      auto src = go.row(i);
                      auto dst = ga->row(i);
                      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += mask[i] * src[j];
                    }
                  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Graph<T>& g = *a.graph;
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  return g.record("relu", std::move(out), g.requires_grad(a), [a](Graph<T>& g, Var<T> self) {
    Tensor<T>* ga = g.grad(a);
    const Tensor<T>& go = *g.grad(self);
    const Tensor<T>& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > T{0}) (*ga)[i] += go[i];
  });
}

/// Inverted dropout. Identity outside training or when p == 0.
template <typename T>
Var<T> dropout(Var<T> a, double p) {
  Graph<T>& g = *a.graph;
  if (!g.training() || p <= 0.0) return a;
  if (p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  const std::uint64_t key = g.next_dropout_key();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(a.value().size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = bits_to_unit(counter_bits(key, i)) >= p ? keep_scale : T{0};
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return g.record("dropout", std::move(out), g.requires_grad(a),
                  [a, mask = std::move(mask)](Graph<T>& g, Var<T> self) {
                    Tensor<T>* ga = g.grad(a);
                    const Tensor<T>& go = *g.grad(self);
                    for (std::size_t i = 0; i < go.size(); ++i) (*ga)[i] += mask[i] * go[i];
                  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row normalization to zero mean and unit variance, then gain·x̂ + bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias) {
  Graph<T>& g = *x.graph;
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), d = xv.cols();
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias width must equal " + std::to_string(d));
  }
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv_std(rows);
  Tensor<T> out(xv.shape());
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = xv.row(i);
    T mean{0};
    for (T v : r) mean += v;
    mean /= static_cast<T>(d);
    T var{0};
    for (T v : r) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    inv_std[i] = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (r[j] - mean) * inv_std[i];
      out(i, j) = gv[j] * xhat(i, j) + bv[j];
    }
  }
  return g.record(
      "layer_norm", std::move(out), g.requires_grad({x, gain, bias}),
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>& g,
                                                                           Var<T> self) {
        const Tensor<T>& go = *g.grad(self);
        const std::size_t rows = go.rows(), d = go.cols();
        const auto& gv = gain.value();
        Tensor<T>* gx = g.grad(x);
        Tensor<T>* gg = g.grad(gain);
        Tensor<T>* gb = g.grad(bias);
        std::vector<T> dxhat(d);
        for (std::size_t i = 0; i < rows; ++i) {
          T mean_d{0}, mean_dx{0};
          for (std::size_t j = 0; j < d; ++j) {
            const T dy = go(i, j);
            if (gg) (*gg)[j] += dy * xhat(i, j);
            if (gb) (*gb)[j] += dy;
            dxhat[j] = dy * gv[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat(i, j);
          }
          if (!gx) continue;
          mean_d /= static_cast<T>(d);
          mean_dx /= static_cast<T>(d);
          for (std::size_t j = 0; j < d; ++j)
            (*gx)(i, j) += inv_std[i] * (dxhat[j] - mean_d - xhat(i, j) * mean_dx);
        }
      });
}

/// Row-wise softmax as a graph op.
template <typename T>
Var<T> softmax_rows(Var<T> x) {
  Graph<T>& g = *x.graph;
  Tensor<T> out = softmax(x.value(), 1);
  return g.record("softmax", std::move(out), g.requires_grad(x), [x](Graph<T>& g, Var<T> self) {
    const Tensor<T>& p = self.value();
    const Tensor<T>& go = *g.grad(self);
    Tensor<T>* gx = g.grad(x);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      T dot{0};
      for (std::size_t j = 0; j < p.cols(); ++j) dot += go(i, j) * p(i, j);
      for (std::size_t j = 0; j < p.cols(); ++j) (*gx)(i, j) += p(i, j) * (go(i, j) - dot);
    }
  });
}

/// out[i] = table[indices[i]]: embedding lookup.
template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<std::size_t> indices) {
  Graph<T>& g = *table.graph;
  const auto& tv = table.value();
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  Tensor<T> out = Tensor<T>::matrix(indices.size(), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= tv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " outside table of " +
                           std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.row(indices[i]).begin(), tv.cols(), out.row(i).begin());
  }
  return g.record("gather_rows", std::move(out), g.requires_grad(table),
                  [table, indices = std::move(indices)](Graph<T>& g, Var<T> self) {
                    Tensor<T>* gt = g.grad(table);
                    const Tensor<T>& go = *g.grad(self);
                    for (std::size_t i = 0; i < indices.size(); ++i) {
                      auto src = go.row(i);
                      auto dst = gt->row(indices[i]);
                      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                    }
                  });
}

/// Horizontal concatenation of equal-height blocks.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  Graph<T>& g = *parts.front().graph;
  const std::size_t rows = parts.front().rows();
  std::size_t width = 0;
  bool needs = false;
  for (auto p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
    width += p.cols();
    needs = needs || g.requires_grad(p);
  }
  Tensor<T> out = Tensor<T>::matrix(rows, width);
  std::size_t off = 0;
  for (auto p : parts) {
    const auto& pv = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(pv.row(i).begin(), pv.cols(), out.row(i).begin() + off);
    off += pv.cols();
  }
  return g.record("concat_cols", std::move(out), needs, [parts](Graph<T>& g, Var<T> self) {
    const Tensor<T>& go = *g.grad(self);
    std::size_t off = 0;
    for (auto p : parts) {
      const std::size_t w = p.cols();
      if (Tensor<T>* gp = g.grad(p)) {
        for (std::size_t i = 0; i < go.rows(); ++i) {
          auto src = go.row(i);
          auto dst = gp->row(i);
          for (std::size_t j = 0; j < w; ++j) dst[j] += src[off + j];
        }
      }
      off += w;
    }
  });
}

/// out[i] = ⟨a_i, b_i⟩ as an m×1 column.
template <typename T>
Var<T> row_dot(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.graph;
  detail::require_same_shape("row_dot", a.value(), b.value());
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out = Tensor<T>::matrix(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    T s{0};
    auto ra = av.row(i);
    auto rb = bv.row(i);
    for (std::size_t j = 0; j < ra.size(); ++j) s += ra[j] * rb[j];
    out[i] = s;
  }
  return g.record("row_dot", std::move(out), g.requires_grad({a, b}), [a, b](Graph<T>& g, Var<T> self) {
    const Tensor<T>& go = *g.grad(self);
    Tensor<T>* ga = g.grad(a);
    Tensor<T>* gb = g.grad(b);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < av.rows(); ++i) {
      for (std::size_t j = 0; j < av.cols(); ++j) {
        if (ga) (*ga)(i, j) += go[i] * bv(i, j);
        if (gb) (*gb)(i, j) += go[i] * av(i, j);
      }
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  Graph<T>& g = *a.graph;
  T s{0};
  for (T v : a.value().values()) s += v;
  return g.record("sum", Tensor<T>::matrix(1, 1, s), g.requires_grad(a), [a](Graph<T>& g, Var<T> self) {
    const T go = (*g.grad(self))[0];
    for (auto& v : g.grad(a)->values()) v += go;
  });
}

/// Σ_i w_i · BCE(σ(s_i), y_i), evaluated stably from logits.
/// Rows with w_i == 0 contribute exactly nothing, gradient included.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, std::vector<T> labels, std::vector<T> weights) {
  Graph<T>& g = *logits.graph;
  const auto& s = logits.value();
  if (labels.size() != s.size() || weights.size() != s.size()) {
    throw DimensionError("bce_with_logits: labels/weights length must match logits");
  }
  T total{0};
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (weights[i] == T{0}) continue;
    const T x = s[i];
    const T softplus = std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
    total += weights[i] * (softplus - labels[i] * x);
  }
  return g.record("bce_with_logits", Tensor<T>::matrix(1, 1, total), g.requires_grad(logits),
                  [logits, labels = std::move(labels), weights = std::move(weights)](Graph<T>& g,
                                                                                    Var<T> self) {
                    const T go = (*g.grad(self))[0];
                    Tensor<T>* gs = g.grad(logits);
                    const auto& s = logits.value();
                    for (std::size_t i = 0; i < s.size(); ++i) {
                      if (weights[i] == T{0}) continue;
                      const T sig = T{1} / (T{1} + std::exp(-s[i]));
                      (*gs)[i] += go * weights[i] * (sig - labels[i]);
                    }
                  });
}

/// Σ_i w_i · (−log softmax(logits_i)[target_i]).
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::vector<std::size_t> targets, std::vector<T> weights) {
  Graph<T>& g = *logits.graph;
  const auto& z = logits.value();
  if (targets.size() != z.rows() || weights.size() != z.rows()) {
    throw DimensionError("softmax_cross_entropy: one target and weight per row required");
  }
  Tensor<T> probs = softmax(z, 1);
  T total{0};
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (targets[i] >= z.cols()) throw DimensionError("softmax_cross_entropy: target out of range");
    if (weights[i] == T{0}) continue;
    auto r = z.row(i);
    const T mx = *std::max_element(r.begin(), r.end());
    T lse{0};
    for (T v : r) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    total += weights[i] * (lse - r[targets[i]]);
  }
  return g.record("softmax_cross_entropy", Tensor<T>::matrix(1, 1, total), g.requires_grad(logits),
                  [logits, probs = std::move(probs), targets = std::move(targets),
                   weights = std::move(weights)](Graph<T>& g, Var<T> self) {
                    const T go = (*g.grad(self))[0];
                    Tensor<T>* gz = g.grad(logits);
                    for (std::size_t i = 0; i < probs.rows(); ++i) {
                      if (weights[i] == T{0}) continue;
                      for (std::size_t j = 0; j < probs.cols(); ++j) {
                        const T y = j == targets[i] ? T{1} : T{0};
                        (*gz)(i, j) += go * weights[i] * (probs(i, j) - y);
                      }
                    }
                  });
}

}  // namespace arec::nn
