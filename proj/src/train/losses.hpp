// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <span>
#include <vector>

#include "tensor/ops.hpp"

namespace resmlp {

// (1 - w) CE(student, labels) + w CE(student, argmax teacher). Both terms use
// the same label smoothing; teacher ties resolve to the lowest class index.
template <typename T>
Var<T> hard_distill_loss(const Var<T>& student_logits, std::span<const int> labels,
                         const Tensor<T>& teacher_logits, T smoothing = T(0),
                         T distill_weight = T(0.5));

// Lowest reachable cross entropy against a smoothed one-hot target over K classes.
double smoothed_entropy_floor(double smoothing, int num_classes);

}  // namespace resmlp
