// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "train/data.hpp"
#include "train/optimizer.hpp"
#include "train/schedule.hpp"
#include "vision/model.hpp"

namespace resmlp {

enum class TrainMode { supervised, hard_distill };

TrainMode parse_train_mode(std::string_view name);
const char* to_string(TrainMode mode) noexcept;

// Desk-scale defaults: AdamW lr 4e-3, wd 0.05, cosine with 5 warmup epochs,
// label smoothing 0.1.
struct TrainConfig {
  OptimizerConfig optimizer;
  double lr = 4e-3;
  int epochs = 20;
  int batch_size = 128;
  ScheduleKind schedule = ScheduleKind::cosine;
  int warmup_epochs = 5;
  std::optional<std::int64_t> warmup_steps;  // overrides warmup_epochs
  int step_epochs = 30;
  double step_gamma = 0.1;
  double label_smoothing = 0.1;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::supervised;
  std::string teacher;  // checkpoint path for hard_distill
  double distill_weight = 0.5;
  bool augment = true;

  void validate() const;
  Schedule schedule_for(std::int64_t steps_per_epoch) const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double best_accuracy = 0.0;
  int best_epoch = 0;
  std::string best_checkpoint;
  std::string final_checkpoint;

  // epoch,loss,acc,seconds
  void write_csv(const std::string& path) const;
};

struct FitOptions {
  std::string out_dir;  // empty: nothing is written
  const VisionModel<float>* teacher = nullptr;
  std::ostream* log = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Gradient slots for every model parameter bound on `tape`. Weight decay
// applies to matrices only; vectors and the positional table are exempt.
std::vector<ParamSlot<float>> vision_slots(VisionModel<float>& model, const Tape<float>& tape);

// Top-1 accuracy with lowest-index tie breaking.
double evaluate(const VisionModel<float>& model, const ImageDataset& data, int batch_size = 256);

TrainReport fit(VisionModel<float>& model, const ImageDataset& train, const ImageDataset& held_out,
                const TrainConfig& cfg, const FitOptions& options = {});

}  // namespace resmlp
