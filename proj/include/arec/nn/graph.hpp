#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "arec/error.hpp"
#include "arec/nn/rng.hpp"
#include "arec/nn/tensor.hpp"

namespace arec::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

/// Owns a model's parameters in registration order. Addresses are stable.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(value)));
    return *params_.back();
  }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named " + name);
    return *params_[it->second];
  }
  const Parameter<T>& at(const std::string& name) const {
    return const_cast<ParameterSet*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Graph;

/// Handle to a node of a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(*this); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended during the forward pass;
/// backward() walks them in reverse and finally adds leaf gradients into the
/// bound Parameter::grad tensors.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, Var<T> self)>;

  struct Options {
    bool training = false;
    std::uint64_t dropout_key = 0;
  };

  Graph() = default;
  explicit Graph(Options opts) : opts_(opts) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const noexcept { return opts_.training; }

  /// Fresh counter-based stream key for the next dropout site.
  std::uint64_t next_dropout_key() noexcept { return hash_combine(opts_.dropout_key, dropout_sites_++); }

  Var<T> constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, false});
    return {this, nodes_.size() - 1};
  }

  Var<T> param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    nodes_.push_back(Node{p.value, {}, {}, &p, true, false});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  /// Append an op result. `needs_grad` should be true iff any input requires grad.
  Var<T> record(const char* op, Tensor<T> value, bool needs_grad, BackwardFn backward) {
    if (!value.all_finite()) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
    nodes_.push_back(Node{std::move(value), {}, needs_grad ? std::move(backward) : BackwardFn{},
                          nullptr, needs_grad, false});
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  bool requires_grad(std::initializer_list<Var<T>> vs) const {
    for (auto v : vs)
      if (requires_grad(v)) return true;
    return false;
  }

  /// Gradient buffer of `v`, zero-allocated on first use; nullptr when `v`
  /// does not require a gradient.
  Tensor<T>* grad(Var<T> v) {
    Node& n = nodes_.at(v.id);
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
    return &n.grad;
  }

  void backward(Var<T> loss) {
    Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) throw DimensionError("backward: loss must be a scalar");
    if (!root.requires_grad) return;
    grad(loss)->fill(T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, Var<T>{this, i});
    }
    for (auto& n : nodes_) {
      if (n.param != nullptr && n.has_grad) {
        auto dst = n.param->grad.values();
        auto src = n.grad.values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* param;
    bool requires_grad;
    bool has_grad;
  };

  Options opts_{};
  std::uint64_t dropout_sites_ = 0;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

}  // namespace arec::nn
