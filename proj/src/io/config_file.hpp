// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seq2seq/model.hpp"
#include "seq2seq/tasks.hpp"
#include "train/trainer.hpp"
#include "vision/config.hpp"

namespace resmlp {

enum class DatasetKind { synthetic, cifar10_binary, raw_tensor_dir };

DatasetKind parse_dataset_kind(std::string_view name);
const char* to_string(DatasetKind kind) noexcept;

// Where training data comes from. Vision runs read kind/path/mean/std and the
// synthetic_* sizes; seq2seq runs read either a toy task or a corpus.
struct DataConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::string path;
  std::vector<double> mean{0.4914, 0.4822, 0.4465};
  std::vector<double> std{0.2470, 0.2435, 0.2616};
  std::int64_t synthetic_train = 5000;
  std::int64_t synthetic_test = 1000;
  double synthetic_noise = 0.5;

  ToyTask task = ToyTask::reverse;
  std::int64_t train_pairs = 50000;
  std::int64_t test_pairs = 1000;
  int min_length = 5;
  int max_length = 20;
  std::string corpus;       // tab-separated pairs; overrides the toy task
  std::string test_corpus;
  std::string vocab;

  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  Seq2SeqConfig seq2seq;

  bool operator==(const RunConfig&) const = default;
};

// `section.key = value` lines with `#` comments. Sections are model, train,
// data and seq2seq. A model.preset line is applied before every other model
// key regardless of where it appears. Unknown keys, malformed values and
// violated constraints raise ParseError with the offending line.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::string& path);

// Applies one `section.key = value` override; ConfigError leaves cfg as it was.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// Every key with its current value; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

// Only the model.* or seq2seq.* lines, as used inside checkpoint headers.
std::string serialize_model_section(const ModelConfig& cfg);
std::string serialize_seq2seq_section(const Seq2SeqConfig& cfg);

}  // namespace resmlp
