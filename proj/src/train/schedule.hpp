// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <string_view>

namespace resmlp {

enum class ScheduleKind { cosine, step, constant };

ScheduleKind parse_schedule(std::string_view name);
const char* to_string(ScheduleKind kind) noexcept;

struct Schedule {
  ScheduleKind kind = ScheduleKind::cosine;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;
  std::int64_t step_size = 1;  // decay period of the step schedule, in steps
  double gamma = 0.1;
  double min_lr = 0.0;

  // Linear warmup from base_lr / warmup_steps, then the chosen decay.
  double lr(double base_lr, std::int64_t step) const;
};

}  // namespace resmlp
