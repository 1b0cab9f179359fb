#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "arec/error.hpp"
#include "arec/nn/graph.hpp"

namespace arec::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one ParameterSet; moments are indexed like the set.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first;
  std::vector<Tensor<T>> second;
};

template <typename T>
class Adam {
 public:
  Adam(const ParameterSet<T>& params, AdamConfig config) {
    state_.config = config;
    for (const auto& p : params) {
      state_.first.emplace_back(p->value.shape());
      state_.second.emplace_back(p->value.shape());
    }
  }

  /// Bias-corrected Adam update, then zeroes every gradient. A non-finite
  /// gradient aborts before any parameter is touched.
  void step(ParameterSet<T>& params) {
    if (params.size() != state_.first.size()) {
      throw DimensionError("adam: parameter set changed since construction");
    }
    for (const auto& p : params) {
      for (std::size_t i = 0; i < p->grad.size(); ++i) {
        if (!std::isfinite(p->grad[i])) {
          throw NumericError("adam: non-finite gradient in parameter '" + p->name + "' at flat index " +
                             std::to_string(i));
        }
      }
    }
    ++state_.step;
    const auto& c = state_.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state_.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state_.step));
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    const T step_size = static_cast<T>(c.lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(c.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      auto& m = state_.first[k];
      auto& v = state_.second[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T gi = p.grad[i];
        m[i] = b1 * m[i] + (T{1} - b1) * gi;
        v[i] = b2 * v[i] + (T{1} - b2) * gi * gi;
        p.value[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      }
      p.zero_grad();
    }
  }

  const AdamState<T>& state() const noexcept { return state_; }

 private:
  AdamState<T> state_;
};

}  // namespace arec::nn
