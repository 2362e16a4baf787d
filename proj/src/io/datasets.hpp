// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <string>
#include <vector>

#include "io/config_file.hpp"
#include "seq2seq/tasks.hpp"
#include "train/data.hpp"

namespace resmlp {

enum class Split { train, test };

inline constexpr std::size_t kCifarRecordBytes = 3073;

// One CIFAR-10 binary file: records of a label byte followed by 3072 pixel
// bytes (channel-major 3x32x32). Pixels become (raw / 255 - mean[c]) / std[c].
// A trailing partial record raises DataError naming its byte offset.
ImageDataset load_cifar10_file(const std::string& path, const std::vector<double>& mean,
                               const std::vector<double>& std);

// data_batch_1..5.bin for the train split, test_batch.bin for test.
ImageDataset load_cifar10(const std::string& dir, Split split, const std::vector<double>& mean,
                          const std::vector<double>& std);

// <dir>/<split>/ holding manifest.txt (`count = n`, `channels`, `height`,
// `width`, `classes` lines), images.bin (u8, [count, C, H, W]) and
// labels.bin (u8, [count]).
ImageDataset load_raw_tensor_dir(const std::string& dir, Split split, const std::vector<double>& mean,
                                 const std::vector<double>& std);

// Dispatches on cfg.kind; the synthetic set uses the model geometry and seed.
ImageDataset load_image_dataset(const DataConfig& cfg, Split split, const ModelConfig& model, std::uint64_t seed);

// Tab-separated source/target lines of whitespace-separated tokens. Unknown
// tokens are added to `vocab` when `grow` is set, otherwise raise DataError.
std::vector<SequencePair> load_parallel_text(const std::string& path, Vocabulary& vocab, bool grow);

struct Seq2SeqData {
  Vocabulary vocab;
  std::vector<SequencePair> train;
  std::vector<SequencePair> test;
};

// Toy task pairs over toy_vocabulary(vocab_size), or a corpus when
// cfg.corpus is set. A corpus without cfg.test_corpus gives up its last
// min(test_pairs, n / 10) pairs as the test split. Without cfg.vocab the
// vocabulary grows from the training corpus.
Seq2SeqData load_seq2seq_data(const DataConfig& cfg, int vocab_size, std::uint64_t seed);

}  // namespace resmlp
