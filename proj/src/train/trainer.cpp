// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "io/checkpoint.hpp"
#include "train/losses.hpp"

namespace resmlp {

TrainMode parse_train_mode(std::string_view name) {
  if (name == "supervised") return TrainMode::supervised;
  if (name == "hard_distill") return TrainMode::hard_distill;
  throw ConfigError("unknown training mode '" + std::string(name) + "'");
}

const char* to_string(TrainMode mode) noexcept {
  return mode == TrainMode::supervised ? "supervised" : "hard_distill";
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite non-negative number");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be non-negative");
  if (warmup_steps && *warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (step_epochs < 1) throw ConfigError("step_epochs must be at least 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
  if (!(distill_weight >= 0.0 && distill_weight <= 1.0)) throw ConfigError("distill_weight must lie in [0, 1]");
  if (optimizer.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(optimizer.eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

Schedule TrainConfig::schedule_for(std::int64_t steps_per_epoch) const {
  Schedule s;
  s.kind = schedule;
  s.warmup_steps = warmup_steps ? *warmup_steps : static_cast<std::int64_t>(warmup_epochs) * steps_per_epoch;
  s.total_steps = std::max<std::int64_t>(1, static_cast<std::int64_t>(epochs) * steps_per_epoch);
  s.step_size = static_cast<std::int64_t>(step_epochs) * steps_per_epoch;
  s.gamma = step_gamma;
  return s;
}

void TrainReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,loss,acc,seconds\n";
  char line[128];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.3f\n", e.epoch, e.loss, e.accuracy, e.seconds);
    out << line;
  }
}

std::vector<ParamSlot<float>> vision_slots(VisionModel<float>& model, const Tape<float>& tape) {
  std::vector<ParamSlot<float>> slots;
  model.visit([&](const std::string& name, Tensor<float>& t) {
    slots.push_back({name, &t, tape.grad_of(t), t.rank() >= 2 && name != "pos_embed"});
  });
  return slots;
}

double evaluate(const VisionModel<float>& model, const ImageDataset& data, int batch_size) {
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  std::int64_t correct = 0;
  std::vector<std::int64_t> rows;
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    rows.clear();
    for (std::int64_t i = start; i < std::min<std::int64_t>(data.size(), start + batch_size); ++i) rows.push_back(i);
    auto batch = gather_batch(data, rows);
    const auto pred = argmax_rows(model.logits(batch.images));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

void check_geometry(const ModelConfig& cfg, const ImageDataset& data, const char* which) {
  if (data.size() == 0) throw ConfigError(std::string(which) + " dataset is empty");
  if (data.channels() != cfg.channels || data.height() != cfg.image_size || data.width() != cfg.image_size) {
    throw ConfigError(std::string(which) + " images " + shape_string(data.images.shape()) +
                      " do not match the model geometry");
  }
  for (int label : data.labels) {
    if (label < 0 || label >= cfg.num_classes) {
      throw ConfigError(std::string(which) + " dataset has label " + std::to_string(label) + " but the model has " +
                        std::to_string(cfg.num_classes) + " classes");
    }
  }
}

}  // namespace

TrainReport fit(VisionModel<float>& model, const ImageDataset& train, const ImageDataset& held_out,
                const TrainConfig& cfg, const FitOptions& options) {
  cfg.validate();
  check_geometry(model.config, train, "training");
  check_geometry(model.config, held_out, "held-out");
  if (model.fused) throw ConfigError("cannot train a fused model");

  std::optional<VisionModel<float>> teacher;
  if (cfg.mode == TrainMode::hard_distill) {
    if (options.teacher == nullptr) throw ConfigError("hard distillation needs a teacher model");
    if (options.teacher->config.num_classes != model.config.num_classes) {
      throw DimensionError("teacher has " + std::to_string(options.teacher->config.num_classes) +
                           " classes, student has " + std::to_string(model.config.num_classes));
    }
    teacher = fuse_affine(*options.teacher);
  }

  std::ofstream log_file;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    log_file.open(options.out_dir + "/train.log");
  }
  auto log = [&](const std::string& line) {
    if (log_file) log_file << line << '\n';
    if (options.log) *options.log << line << std::endl;
  };

  const std::int64_t n = train.size();
  const std::int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const Schedule schedule = cfg.schedule_for(steps_per_epoch);
  Optimizer<float> optimizer(cfg.optimizer);
  const auto smoothing = static_cast<float>(cfg.label_smoothing);

  TrainReport report;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    BatchPrefetcher batches(train, epoch_order(n, cfg.seed, epoch, true), cfg.batch_size, cfg.augment, cfg.seed,
                            epoch);
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    while (auto batch = batches.next()) {
      Tape<float> tape;
      auto logits = model.forward(tape, batch->images);
      const std::span<const int> labels(batch->labels);
      Var<float> loss = teacher ? hard_distill_loss(logits, labels, teacher->logits(batch->images), smoothing,
                                                    static_cast<float>(cfg.distill_weight))
                                : cross_entropy(logits, labels, smoothing);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                            std::to_string(step));
      }
      tape.backward(loss);
      auto slots = vision_slots(model, tape);
      optimizer.step(slots, schedule.lr(cfg.lr, step));
      ++step;
      loss_sum += value * static_cast<double>(batch->labels.size());
      seen += static_cast<std::int64_t>(batch->labels.size());
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / static_cast<double>(std::max<std::int64_t>(1, seen));
    rec.accuracy = evaluate(model, held_out);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(rec);
    if (report.epochs.size() == 1 || rec.accuracy > report.best_accuracy) {
      report.best_accuracy = rec.accuracy;
      report.best_epoch = rec.epoch;
      if (!options.out_dir.empty()) {
        report.best_checkpoint = options.out_dir + "/best.ckpt";
        save_checkpoint(model, report.best_checkpoint);
      }
    }
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d loss %.6f acc %.4f seconds %.1f", rec.epoch, rec.loss, rec.accuracy,
                  rec.seconds);
    log(line);
    if (options.on_epoch) options.on_epoch(rec);
  }
  if (!options.out_dir.empty()) {
    report.final_checkpoint = options.out_dir + "/final.ckpt";
    save_checkpoint(model, report.final_checkpoint);
    report.write_csv(options.out_dir + "/train.csv");
  }
  return report;
}

}  // namespace resmlp
