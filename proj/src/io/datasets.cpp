// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "io/datasets.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace resmlp {

namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void check_normalization(const std::vector<double>& mean, const std::vector<double>& std, int channels) {
  if (static_cast<int>(mean.size()) != channels || static_cast<int>(std.size()) != channels) {
    throw ConfigError("normalization needs " + std::to_string(channels) + " mean and std values");
  }
}

float normalize(unsigned char raw, double mean, double std) {
  return static_cast<float>((raw / 255.0 - mean) / std);
}

ImageDataset concat(std::vector<ImageDataset> parts) {
  if (parts.size() == 1) return std::move(parts.front());
  std::int64_t n = 0;
  for (const auto& p : parts) n += p.size();
  const auto& first = parts.front();
  ImageDataset out{Tensor<float>(Shape{n, first.channels(), first.height(), first.width()}), {}, first.num_classes};
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.images.values().begin(), p.images.values().end(), out.images.values().begin() + static_cast<std::ptrdiff_t>(at));
    at += p.images.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

}  // namespace

ImageDataset load_cifar10_file(const std::string& path, const std::vector<double>& mean,
                               const std::vector<double>& std) {
  check_normalization(mean, std, 3);
  const auto bytes = read_bytes(path);
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DataError("'" + path + "': partial record of " + std::to_string(bytes.size() % kCifarRecordBytes) +
                    " bytes at offset " + std::to_string(records * kCifarRecordBytes));
  }
  if (records == 0) throw DataError("'" + path + "' holds no records");
  ImageDataset data{Tensor<float>(Shape{static_cast<std::int64_t>(records), 3, 32, 32}), {}, 10};
  data.labels.reserve(records);
  float* out = data.images.data();
  for (std::size_t r = 0; r < records; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw DataError("'" + path + "': label " + std::to_string(rec[0]) + " at offset " +
                      std::to_string(r * kCifarRecordBytes));
    }
    data.labels.push_back(rec[0]);
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 1024; ++i) *out++ = normalize(rec[1 + c * 1024 + i], mean[c], std[c]);
    }
  }
  return data;
}

ImageDataset load_cifar10(const std::string& dir, Split split, const std::vector<double>& mean,
                          const std::vector<double>& std) {
  std::vector<ImageDataset> parts;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) parts.push_back(load_cifar10_file(dir + "/data_batch_" + std::to_string(i) + ".bin", mean, std));
  } else {
    parts.push_back(load_cifar10_file(dir + "/test_batch.bin", mean, std));
  }
  return concat(std::move(parts));
}

ImageDataset load_raw_tensor_dir(const std::string& dir, Split split, const std::vector<double>& mean,
                                 const std::vector<double>& std) {
  const std::string root = dir + (split == Split::train ? "/train" : "/test");
  std::ifstream manifest(root + "/manifest.txt");
  if (!manifest) throw IoError("cannot open '" + root + "/manifest.txt'");
  std::map<std::string, std::int64_t> fields;
  for (std::string line; std::getline(manifest, line);) {
    std::replace(line.begin(), line.end(), '=', ' ');
    std::istringstream words(line);
    std::string key;
    std::int64_t value = 0;
    if (!(words >> key) || key.starts_with('#')) continue;
    if (!(words >> value)) throw DataError("'" + root + "/manifest.txt': bad line '" + line + "'");
    fields[key] = value;
  }
  for (const char* k : {"count", "channels", "height", "width", "classes"}) {
    if (!fields.count(k) || fields[k] < 1) throw DataError("'" + root + "/manifest.txt' lacks a positive '" + k + "'");
  }
  const auto n = fields["count"];
  const auto c = fields["channels"];
  const auto h = fields["height"];
  const auto w = fields["width"];
  check_normalization(mean, std, static_cast<int>(c));
  const auto images = read_bytes(root + "/images.bin");
  const auto labels = read_bytes(root + "/labels.bin");
  const auto expected = static_cast<std::size_t>(n * c * h * w);
  if (images.size() != expected) {
    throw DataError("'" + root + "/images.bin' has " + std::to_string(images.size()) + " bytes, manifest implies " +
                    std::to_string(expected));
  }
  if (labels.size() != static_cast<std::size_t>(n)) {
    throw DataError("'" + root + "/labels.bin' has " + std::to_string(labels.size()) + " bytes, expected " +
                    std::to_string(n));
  }
  ImageDataset data{Tensor<float>(Shape{n, c, h, w}), {}, static_cast<int>(fields["classes"])};
  const auto plane = static_cast<std::size_t>(h * w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto ch = (i / plane) % static_cast<std::size_t>(c);
    data.images[i] = normalize(images[i], mean[ch], std[ch]);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= data.num_classes) {
      throw DataError("'" + root + "/labels.bin': label " + std::to_string(labels[i]) + " at offset " + std::to_string(i));
    }
    data.labels.push_back(labels[i]);
  }
  return data;
}

ImageDataset load_image_dataset(const DataConfig& cfg, Split split, const ModelConfig& model, std::uint64_t seed) {
  switch (cfg.kind) {
    case DatasetKind::cifar10_binary:
      return load_cifar10(cfg.path, split, cfg.mean, cfg.std);
    case DatasetKind::raw_tensor_dir:
      return load_raw_tensor_dir(cfg.path, split, cfg.mean, cfg.std);
    case DatasetKind::synthetic:
      break;
  }
  // Both splits share the class prototypes (same seed); the split tag only
  // changes which samples are drawn.
  const auto n = split == Split::train ? cfg.synthetic_train : cfg.synthetic_test;
  return synthetic_dataset(n, model.num_classes, model.image_size, seed, cfg.synthetic_noise,
                           split == Split::train ? 0 : 1);
}

std::vector<SequencePair> load_parallel_text(const std::string& path, Vocabulary& vocab, bool grow) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus '" + path + "'");
  std::vector<SequencePair> pairs;
  std::string line;
  int number = 0;
  auto tokens = [&](std::string_view side) {
    std::vector<int> ids;
    std::istringstream words{std::string(side)};
    std::string word;
    while (words >> word) {
      if (!vocab.contains(word)) {
        if (!grow) throw DataError(path + ":" + std::to_string(number) + ": unknown token '" + word + "'");
        vocab.add(word);
      }
      ids.push_back(vocab.id(word));
    }
    if (ids.empty()) throw DataError(path + ":" + std::to_string(number) + ": empty side");
    return ids;
  };
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path + ":" + std::to_string(number) + ": expected exactly one tab");
    }
    const std::string_view view(line);
    pairs.push_back({tokens(view.substr(0, tab)), tokens(view.substr(tab + 1))});
  }
  if (pairs.empty()) throw DataError("'" + path + "' holds no pairs");
  return pairs;
}

Seq2SeqData load_seq2seq_data(const DataConfig& cfg, int vocab_size, std::uint64_t seed) {
  Seq2SeqData d;
  if (cfg.corpus.empty()) {
    d.vocab = toy_vocabulary(vocab_size);
    d.train = make_toy_pairs(cfg.task, cfg.train_pairs, vocab_size, cfg.min_length, cfg.max_length, derive_seed(seed, 1));
    d.test = make_toy_pairs(cfg.task, cfg.test_pairs, vocab_size, cfg.min_length, cfg.max_length, derive_seed(seed, 2));
    return d;
  }
  const bool grow = cfg.vocab.empty();
  if (!grow) d.vocab = Vocabulary::load(cfg.vocab);
  d.train = load_parallel_text(cfg.corpus, d.vocab, grow);
  if (!cfg.test_corpus.empty()) {
    d.test = load_parallel_text(cfg.test_corpus, d.vocab, false);
  } else {
    const auto held = std::min<std::int64_t>(cfg.test_pairs, static_cast<std::int64_t>(d.train.size()) / 10);
    if (held < 1) throw DataError("corpus '" + cfg.corpus + "' is too small to hold out a test split");
    d.test.assign(d.train.end() - held, d.train.end());
    d.train.resize(d.train.size() - static_cast<std::size_t>(held));
  }
  return d;
}

}  // namespace resmlp
