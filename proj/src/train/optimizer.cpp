// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "train/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace resmlp {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adamw") return OptimizerKind::adamw;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

const char* to_string(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::adamw ? "adamw" : "sgd";
}

template <typename T>
void Optimizer<T>::step(std::vector<ParamSlot<T>>& slots, double lr) {
  for (const auto& s : slots) {
    if (s.value == nullptr || s.grad.shape() != s.value->shape()) {
      throw DimensionError("optimizer: gradient shape mismatch for " + s.name);
    }
    double worst = 0.0;
    bool finite = true;
    for (T g : s.grad.values()) {
      if (!std::isfinite(static_cast<double>(g))) finite = false;
      else worst = std::max(worst, std::abs(static_cast<double>(g)));
    }
    if (!finite) {
      std::ostringstream msg;
      msg << "non-finite gradient in " << s.name << " (max finite |g| = " << worst << ")";
      throw TrainingError(msg.str());
    }
  }
  if (first_.empty()) {
    first_.resize(slots.size());
    second_.resize(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
      first_[i].assign(slots[i].value->size(), T(0));
      if (cfg_.kind == OptimizerKind::adamw) second_[i].assign(slots[i].value->size(), T(0));
    }
  } else if (first_.size() != slots.size()) {
    throw ContractError("optimizer: parameter list changed between steps");
  }
  ++steps_;

  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& s = slots[i];
    T* p = s.value->data();
    const T* g = s.grad.data();
    T* m = first_[i].data();
    const std::size_t n = s.value->size();
    const double wd = s.decay ? cfg_.weight_decay : 0.0;
    if (cfg_.kind == OptimizerKind::adamw) {
      T* v = second_[i].data();
      const double shrink = 1.0 - lr * wd;
      for (std::size_t k = 0; k < n; ++k) {
        const double gk = g[k];
        const double mk = b1 * m[k] + (1.0 - b1) * gk;
        const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
        m[k] = static_cast<T>(mk);
        v[k] = static_cast<T>(vk);
        const double update = (mk / c1) / (std::sqrt(vk / c2) + cfg_.eps);
        p[k] = static_cast<T>(static_cast<double>(p[k]) * shrink - lr * update);
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) {
        const double gk = static_cast<double>(g[k]) + wd * static_cast<double>(p[k]);
        const double buf = steps_ == 1 ? gk : cfg_.momentum * m[k] + gk;
        m[k] = static_cast<T>(buf);
        p[k] = static_cast<T>(static_cast<double>(p[k]) - lr * buf);
      }
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace resmlp
