#pragma once

#include <cmath>

#include "arec/nn/rng.hpp"
#include "arec/nn/tensor.hpp"

namespace arec::nn::init {

template <typename T>
Tensor<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t = Tensor<T>::matrix(fan_in, fan_out);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
Tensor<T> normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor<T> t = Tensor<T>::matrix(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

inline constexpr double kEmbeddingStd = 0.02;

}  // namespace arec::nn::init
