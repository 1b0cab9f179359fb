#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "arec/error.hpp"

namespace arec::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array. Rank-2 is the working form for every graph op;
/// other ranks only appear in checkpoints.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{0}) {
    return Tensor({rows, cols}, fill);
  }

  static Tensor from_rows(const std::vector<std::vector<T>>& rows) {
    if (rows.empty()) throw DimensionError("from_rows: no rows");
    const std::size_t cols = rows.front().size();
    std::vector<T> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_rank2();
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank2();
    return shape_[1];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * shape_[1] + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (auto e : shape_) {
      if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape_));
    }
  }
  void require_rank2() const {
    if (shape_.size() != 2) {
      throw DimensionError("expected a rank-2 tensor, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

namespace kernel {

// Row-major C[m×n] += A[m×k] · B[k×n]; inner loop is a contiguous axpy.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T{0}) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ.
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_acc(a, bt.data(), c, m, k, n);
}

// C[k×n] += A[m×k]ᵀ · B[m×n].
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T{0}) continue;
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace kernel

/// Plain matrix product without a graph.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(a.rows(), b.cols());
  kernel::gemm_acc(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

/// Numerically stable softmax along `axis` (0 = down columns, 1 = across rows)
/// of a rank-2 tensor. Rank-1 tensors are treated as a single row.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis = 1) {
  if (x.empty()) throw DimensionError("softmax: empty axis");
  if (x.rank() == 1) {
    Tensor<T> row({1, x.size()}, std::vector<T>(x.values().begin(), x.values().end()));
    Tensor<T> out = softmax(row, 1);
    return Tensor<T>(x.shape(), std::vector<T>(out.values().begin(), out.values().end()));
  }
  if (x.rank() != 2 || axis > 1) throw DimensionError("softmax: expects rank-2 input and axis 0/1");
  const std::size_t outer = axis == 1 ? x.rows() : x.cols();
  const std::size_t inner = axis == 1 ? x.cols() : x.rows();
  Tensor<T> out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    auto at = [&](std::size_t i) -> std::size_t {
      return axis == 1 ? o * x.cols() + i : i * x.cols() + o;
    };
    T mx = x[at(0)];
    for (std::size_t i = 1; i < inner; ++i) mx = std::max(mx, x[at(i)]);
    T sum{0};
    for (std::size_t i = 0; i < inner; ++i) {
      const T e = std::exp(x[at(i)] - mx);
      out[at(i)] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < inner; ++i) out[at(i)] /= sum;
  }
  return out;
}

}  // namespace arec::nn
