// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tensor/tensor.hpp"

namespace resmlp {

enum class OptimizerKind { adamw, sgd };

OptimizerKind parse_optimizer(std::string_view name);
const char* to_string(OptimizerKind kind) noexcept;

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;  // sgd only

  bool operator==(const OptimizerConfig&) const = default;
};

// One trainable tensor with its gradient for the current step.
template <typename T>
struct ParamSlot {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T> grad;
  bool decay = true;
};

// AdamW with decoupled decay (p <- p (1 - lr wd), then the Adam step), or SGD
// with momentum and decay added to the gradient. State is kept per slot
// position, so the slot order must be the same on every call.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  // Throws TrainingError naming the parameter if any gradient is non-finite;
  // nothing is updated in that case.
  void step(std::vector<ParamSlot<T>>& slots, double lr);

  std::int64_t steps() const noexcept { return steps_; }
  const OptimizerConfig& config() const noexcept { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::int64_t steps_ = 0;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
};

}  // namespace resmlp
