// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "tensor/tensor.hpp"

namespace resmlp {

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
  Tensor<T> owned;
  const Tensor<T>* borrowed = nullptr;  // parameters are read in place
  Tensor<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  const Tensor<T>& value() const noexcept { return borrowed ? *borrowed : owned; }

  // Zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (!has_grad) {
      grad = Tensor<T>(value().shape());
      has_grad = true;
    }
    return grad;
  }
};

}  // namespace detail

// A value recorded on a tape. Cheap to copy; copies alias the same node.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::shared_ptr<detail::Node<T>> node) : tape_(tape), node_(std::move(node)) {}

  bool valid() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value(); }
  const Shape& shape() const { return node_->value().shape(); }
  bool requires_grad() const noexcept { return node_->requires_grad; }
  Tape<T>& tape() const noexcept { return *tape_; }
  detail::Node<T>& node() const noexcept { return *node_; }
  const std::shared_ptr<detail::Node<T>>& node_ptr() const noexcept { return node_; }

  // Gradient after Tape::backward; zeros if the node was not reached.
  Tensor<T> grad() const {
    return node_->has_grad ? node_->grad : Tensor<T>(node_->value().shape());
  }

 private:
  Tape<T>* tape_ = nullptr;
  std::shared_ptr<detail::Node<T>> node_;
};

// Define-by-run gradient tape. Nodes are appended in evaluation order, which
// is a topological order, and replayed in reverse by backward(). With
// gradients disabled nothing is retained beyond the Vars the caller holds.
template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) {
    auto node = std::make_shared<detail::Node<T>>();
    node->owned = std::move(value);
    return Var<T>(this, std::move(node));
  }

  // Trainable leaf. With gradients enabled the node participates in
  // backward(); values are read by reference, so `value` must outlive the tape.
  Var<T> parameter(const Tensor<T>& value) {
    auto it = bound_.find(&value);
    if (it != bound_.end()) return it->second;
    auto node = std::make_shared<detail::Node<T>>();
    node->borrowed = &value;
    node->requires_grad = grad_enabled_;
    Var<T> v(this, node);
    if (grad_enabled_) nodes_.push_back(node);
    bound_.emplace(&value, v);
    return v;
  }

  // Trainable leaf owning its value (used for gradient probes on inputs).
  Var<T> leaf(Tensor<T> value) {
    auto node = std::make_shared<detail::Node<T>>();
    node->owned = std::move(value);
    node->requires_grad = grad_enabled_;
    if (grad_enabled_) nodes_.push_back(node);
    return Var<T>(this, std::move(node));
  }

  // Records an op result. `backward` receives the output node (its grad is
  // populated) and must accumulate into its inputs' grad buffers.
  Var<T> record(Tensor<T> value, bool any_input_requires_grad,
                std::function<void(detail::Node<T>&)> backward) {
    auto node = std::make_shared<detail::Node<T>>();
    node->owned = std::move(value);
    if (grad_enabled_ && any_input_requires_grad) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      nodes_.push_back(node);
    }
    return Var<T>(this, std::move(node));
  }

  // Gradient of the bound parameter `value`, or zeros if unbound/unreached.
  Tensor<T> grad_of(const Tensor<T>& value) const {
    auto it = bound_.find(&value);
    if (it == bound_.end()) return Tensor<T>(value.shape());
    return it->second.grad();
  }

  bool is_bound(const Tensor<T>& value) const { return bound_.count(&value) != 0; }

  // Reverse-mode sweep from a single-element loss. Gradients from any earlier
  // sweep are cleared first so repeated calls give identical results.
  void backward(const Var<T>& loss) {
    if (loss.value().size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " +
                          shape_string(loss.shape()));
    }
    if (&loss.tape() != this) throw ContractError("loss was recorded on a different tape");
    for (auto& node : nodes_) {
      node->has_grad = false;
      node->grad = Tensor<T>();
    }
    if (!loss.requires_grad()) return;
    loss.node().grad_buffer()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto& node = **it;
      if (node.backward && node.has_grad) node.backward(node);
    }
  }

  std::size_t recorded() const noexcept { return nodes_.size(); }

 private:
  bool grad_enabled_;
  std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
  std::unordered_map<const Tensor<T>*, Var<T>> bound_;
};

}  // namespace resmlp
