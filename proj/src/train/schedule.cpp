// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "train/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "common/error.hpp"

namespace resmlp {

ScheduleKind parse_schedule(std::string_view name) {
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "step") return ScheduleKind::step;
  if (name == "constant") return ScheduleKind::constant;
  throw ConfigError("unknown schedule '" + std::string(name) + "'");
}

const char* to_string(ScheduleKind kind) noexcept {
  switch (kind) {
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::step: return "step";
    case ScheduleKind::constant: return "constant";
  }
  return "?";
}

double Schedule::lr(double base_lr, std::int64_t step) const {
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::int64_t after = step - warmup_steps;
  switch (kind) {
    case ScheduleKind::constant: return base_lr;
    case ScheduleKind::step: {
      const auto drops = step_size > 0 ? after / step_size : 0;
      return base_lr * std::pow(gamma, static_cast<double>(drops));
    }
    case ScheduleKind::cosine: {
      const double span = static_cast<double>(std::max<std::int64_t>(1, total_steps - warmup_steps));
      const double t = std::min(1.0, static_cast<double>(after) / span);
      return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * t));
    }
  }
  return base_lr;
}

}  // namespace resmlp
