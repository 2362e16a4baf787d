// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "train/losses.hpp"

#include <cmath>

namespace resmlp {

template <typename T>
Var<T> hard_distill_loss(const Var<T>& student_logits, std::span<const int> labels,
                         const Tensor<T>& teacher_logits, T smoothing, T distill_weight) {
  const auto& s = student_logits.shape();
  const auto& t = teacher_logits.shape();
  if (s.size() != 2 || t.size() != 2 || s[0] != t[0] || s[1] != t[1]) {
    throw DimensionError("hard_distill_loss: student " + shape_string(s) + " vs teacher " +
                         shape_string(t));
  }
  if (!(distill_weight >= T(0) && distill_weight <= T(1))) {
    throw ConfigError("distillation weight must lie in [0, 1]");
  }
  const auto pseudo = argmax_rows(teacher_logits);
  auto truth = cross_entropy(student_logits, labels, smoothing);
  auto teacher = cross_entropy(student_logits, std::span<const int>(pseudo), smoothing);
  return add(scale(truth, T(1) - distill_weight), scale(teacher, distill_weight));
}

double smoothed_entropy_floor(double smoothing, int num_classes) {
  if (smoothing <= 0.0) return 0.0;
  const double k = num_classes;
  const double hit = 1.0 - smoothing + smoothing / k;
  return -hit * std::log(hit) - smoothing * (k - 1) / k * std::log(smoothing / k);
}

template Var<float> hard_distill_loss(const Var<float>&, std::span<const int>, const Tensor<float>&, float, float);
template Var<double> hard_distill_loss(const Var<double>&, std::span<const int>, const Tensor<double>&, double,
                                       double);

}  // namespace resmlp
