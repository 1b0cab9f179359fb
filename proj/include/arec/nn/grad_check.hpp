#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "arec/nn/graph.hpp"
#include "arec/nn/rng.hpp"

namespace arec::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Scalar loss. When called with `accumulate_grads == true` it must also run
/// backward and add the analytic gradient into each Parameter::grad.
template <typename T>
using LossFn = std::function<T(bool accumulate_grads)>;

/// |a − n| / max(|a|, |n|, 1e-8) for one coordinate.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central finite differences against the analytic gradient. When a parameter
/// has more than `max_coords_per_param` entries, that many are drawn from a
/// seeded stream; 0 checks every coordinate.
template <typename T>
GradCheckResult grad_check(const LossFn<T>& loss_fn, ParameterSet<T>& params, double epsilon = 1e-4,
                           std::size_t max_coords_per_param = 0, std::uint64_t seed = 0) {
  params.zero_grad();
  loss_fn(true);
  std::vector<Tensor<T>> analytic;
  for (const auto& p : params) analytic.push_back(p->grad);
  params.zero_grad();

  GradCheckResult result;
  Rng rng(seed, 0x67726164);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    std::vector<std::size_t> coords(p.value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords_per_param != 0 && coords.size() > max_coords_per_param) {
      shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const T original = p.value[i];
      p.value[i] = original + static_cast<T>(epsilon);
      const double up = static_cast<double>(loss_fn(false));
      p.value[i] = original - static_cast<T>(epsilon);
      const double down = static_cast<double>(loss_fn(false));
      p.value[i] = original;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err = relative_error(static_cast<double>(analytic[k][i]), numeric);
      ++result.coordinates;
      if (err > result.max_rel_error || result.worst_parameter.empty()) {
        result.max_rel_error = err;
        result.worst_parameter = p.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace arec::nn
