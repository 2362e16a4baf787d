// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "train/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace resmlp {

Batch gather_batch(const ImageDataset& data, std::span<const std::int64_t> rows, Rng* augment, int pad) {
  const int c = data.channels();
  const int h = data.height();
  const int w = data.width();
  const std::int64_t per = static_cast<std::int64_t>(c) * h * w;
  Batch batch;
  batch.images = Tensor<float>(Shape{static_cast<std::int64_t>(rows.size()), c, h, w});
  batch.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    if (r < 0 || r >= data.size()) throw ContractError("gather_batch: row index out of range");
    batch.labels.push_back(data.labels[static_cast<std::size_t>(r)]);
    const float* src = data.images.data() + r * per;
    float* dst = batch.images.data() + static_cast<std::int64_t>(i) * per;
    if (augment == nullptr) {
      std::copy(src, src + per, dst);
      continue;
    }
    const bool flip = augment->integer(0, 1) == 1;
    const int dy = augment->integer(-pad, pad);
    const int dx = augment->integer(-pad, pad);
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        const int sy = y + dy;
        for (int x = 0; x < w; ++x) {
          const int ox = flip ? w - 1 - x : x;
          const int sx = ox + dx;
          float v = 0.0f;
          if (sy >= 0 && sy < h && sx >= 0 && sx < w) v = src[(ch * h + sy) * w + sx];
          dst[(ch * h + y) * w + x] = v;
        }
      }
    }
  }
  return batch;
}

std::vector<std::int64_t> epoch_order(std::int64_t n, std::uint64_t seed, int epoch, bool shuffle) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Rng rng(derive_seed(seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
    // Fisher-Yates with the library generator so the order does not depend
    // on the standard library's shuffle implementation.
    for (std::int64_t i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::int64_t> pick(0, i);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng.engine()))]);
    }
  }
  return order;
}

BatchPrefetcher::BatchPrefetcher(const ImageDataset& data, std::vector<std::int64_t> order, int batch_size,
                                 bool augment, std::uint64_t seed, int epoch, std::size_t capacity)
    : data_(data),
      order_(std::move(order)),
      batch_size_(batch_size),
      augment_(augment),
      seed_(seed),
      epoch_(epoch),
      capacity_(std::max<std::size_t>(1, capacity)) {
  if (batch_size_ < 1) throw ConfigError("batch_size must be at least 1");
  worker_ = std::thread([this] { run(); });
}

BatchPrefetcher::~BatchPrefetcher() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  space_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void BatchPrefetcher::run() {
  try {
    const std::size_t n = order_.size();
    std::size_t index = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size_), ++index) {
      const std::size_t len = std::min(n - start, static_cast<std::size_t>(batch_size_));
      std::optional<Rng> rng;
      if (augment_) {
        rng.emplace(derive_seed(seed_, (static_cast<std::uint64_t>(epoch_) << 32) | index));
      }
      Batch b = gather_batch(data_, std::span<const std::int64_t>(order_.data() + start, len),
                             rng ? &*rng : nullptr);
      std::unique_lock<std::mutex> lock(mutex_);
      space_.wait(lock, [&] { return stop_ || queue_.size() < capacity_; });
      if (stop_) return;
      queue_.push_back(std::move(b));
      ready_.notify_one();
    }
  } catch (...) {
    std::lock_guard<std::mutex> lock(mutex_);
    error_ = std::current_exception();
  }
  std::lock_guard<std::mutex> lock(mutex_);
  done_ = true;
  ready_.notify_all();
}

std::optional<Batch> BatchPrefetcher::next() {
  std::unique_lock<std::mutex> lock(mutex_);
  ready_.wait(lock, [&] { return !queue_.empty() || done_; });
  if (!queue_.empty()) {
    Batch b = std::move(queue_.front());
    queue_.pop_front();
    space_.notify_one();
    return b;
  }
  if (error_) std::rethrow_exception(error_);
  return std::nullopt;
}

ImageDataset synthetic_dataset(std::int64_t n, int num_classes, int image_size, std::uint64_t seed,
                               double noise, std::uint64_t stream) {
  if (n < 1 || num_classes < 2 || image_size < 1) throw ConfigError("synthetic_dataset: bad geometry");
  const int c = 3;
  const int s = image_size;
  const std::int64_t per = static_cast<std::int64_t>(c) * s * s;
  // Prototypes: sums of a few random plane waves per channel.
  std::vector<float> prototypes(static_cast<std::size_t>(num_classes * per));
  Rng proto_rng(derive_seed(seed, 1));
  for (int k = 0; k < num_classes; ++k) {
    for (int ch = 0; ch < c; ++ch) {
      double fx[3], fy[3], phase[3], amp[3];
      for (int j = 0; j < 3; ++j) {
        fx[j] = proto_rng.uniform(-3.0, 3.0);
        fy[j] = proto_rng.uniform(-3.0, 3.0);
        phase[j] = proto_rng.uniform(0.0, 6.283185307179586);
        amp[j] = proto_rng.uniform(0.3, 1.0);
      }
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          double v = 0;
          for (int j = 0; j < 3; ++j) {
            v += amp[j] * std::sin(6.283185307179586 * (fx[j] * x + fy[j] * y) / s + phase[j]);
          }
          prototypes[static_cast<std::size_t>(k * per + (ch * s + y) * s + x)] = static_cast<float>(v);
        }
      }
    }
  }
  ImageDataset data;
  data.num_classes = num_classes;
  data.images = Tensor<float>(Shape{n, c, s, s});
  data.labels.resize(static_cast<std::size_t>(n));
  Rng rng(derive_seed(seed, 2 + stream));
  for (std::int64_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % num_classes);
    data.labels[static_cast<std::size_t>(i)] = k;
    float* dst = data.images.data() + i * per;
    const float* proto = prototypes.data() + k * per;
    for (std::int64_t j = 0; j < per; ++j) dst[j] = proto[j] + static_cast<float>(rng.normal(0.0, noise));
  }
  return data;
}

}  // namespace resmlp
