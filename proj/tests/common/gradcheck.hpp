// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tensor/tape.hpp"

namespace resmlp::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;  // "<name>[<index>]" of the worst element
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double a, double n, double floor = 1e-8) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

struct Probe {
  std::string name;
  Tensor<double>* tensor;
};

// Compares tape gradients of loss_fn w.r.t. each probed tensor against
// central differences. loss_fn must bind the probed tensors as parameters.
// `floor` bounds the relative-error denominator from below so gradients at
// the level of finite-difference round-off do not dominate.
inline GradCheckResult grad_check(const std::vector<Probe>& probes,
                                  const std::function<Var<double>(Tape<double>&)>& loss_fn,
                                  double h = 1e-5, std::size_t max_per_tensor = 0, double floor = 1e-8) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    auto loss = loss_fn(tape);
    tape.backward(loss);
    for (const auto& p : probes) analytic.push_back(tape.grad_of(*p.tensor));
  }
  auto eval = [&] {
    Tape<double> tape(false);
    return loss_fn(tape).value()[0];
  };
  GradCheckResult r;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    auto& t = *probes[k].tensor;
    const std::size_t n = static_cast<std::size_t>(t.size());
    const std::size_t stride = (max_per_tensor && n > max_per_tensor) ? n / max_per_tensor : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = t[i];
      t[i] = saved + h;
      const double up = eval();
      t[i] = saved - h;
      const double down = eval();
      t[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k][i];
      const double rel = relative_error(a, numeric, floor);
      r.max_abs_error = std::max(r.max_abs_error, std::abs(a - numeric));
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = probes[k].name + "[" + std::to_string(i) + "]";
      }
      ++r.checked;
    }
  }
  return r;
}

}  // namespace resmlp::testing
