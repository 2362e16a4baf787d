// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "common/random.hpp"
#include "tensor/tensor.hpp"

namespace resmlp {

// Labelled images, already normalised, stored as one [n, C, H, W] block.
struct ImageDataset {
  Tensor<float> images;
  std::vector<int> labels;
  int num_classes = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  int channels() const { return static_cast<int>(images.dim(1)); }
  int height() const { return static_cast<int>(images.dim(2)); }
  int width() const { return static_cast<int>(images.dim(3)); }
};

struct Batch {
  Tensor<float> images;
  std::vector<int> labels;
};

// Copies the given rows into a batch. With an rng, each image is flipped
// horizontally with probability 1/2 and randomly cropped from a copy padded
// by `pad` zero pixels on every side.
Batch gather_batch(const ImageDataset& data, std::span<const std::int64_t> rows, Rng* augment = nullptr,
                   int pad = 4);

// Visit order for one epoch; a pure function of (n, seed, epoch).
std::vector<std::int64_t> epoch_order(std::int64_t n, std::uint64_t seed, int epoch, bool shuffle);

// Assembles the batches of one epoch on a worker thread ahead of the
// consumer, holding at most `capacity` finished batches. Batch contents
// depend only on (order, seed, epoch, batch index).
class BatchPrefetcher {
 public:
  BatchPrefetcher(const ImageDataset& data, std::vector<std::int64_t> order, int batch_size, bool augment,
                  std::uint64_t seed, int epoch, std::size_t capacity = 2);
  ~BatchPrefetcher();
  BatchPrefetcher(const BatchPrefetcher&) = delete;
  BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;

  // Next batch in order, or nullopt once the epoch is exhausted. Rethrows
  // any error raised while assembling.
  std::optional<Batch> next();

 private:
  void run();

  const ImageDataset& data_;
  std::vector<std::int64_t> order_;
  int batch_size_;
  bool augment_;
  std::uint64_t seed_;
  int epoch_;
  std::size_t capacity_;

  std::mutex mutex_;
  std::condition_variable ready_;
  std::condition_variable space_;
  std::deque<Batch> queue_;
  bool done_ = false;
  bool stop_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

// A learnable toy image task: each class has a fixed random low-frequency
// prototype; samples are the prototype plus Gaussian pixel noise. Different
// `stream` values draw independent samples around the same prototypes.
ImageDataset synthetic_dataset(std::int64_t n, int num_classes, int image_size, std::uint64_t seed,
                               double noise = 0.5, std::uint64_t stream = 0);

}  // namespace resmlp
