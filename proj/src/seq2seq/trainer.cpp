// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "seq2seq/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "common/random.hpp"
#include "io/checkpoint.hpp"
#include "seq2seq/search.hpp"

namespace resmlp {

Seq2SeqBatch make_seq2seq_batch(const std::vector<SequencePair>& pairs, std::span<const std::int64_t> rows) {
  std::vector<std::vector<int>> src, tgt_in;
  for (auto r : rows) {
    const auto& p = pairs.at(static_cast<std::size_t>(r));
    src.push_back(p.source);
    std::vector<int> in{kBosId};
    in.insert(in.end(), p.target.begin(), p.target.end());
    tgt_in.push_back(std::move(in));
  }
  Seq2SeqBatch b;
  b.source = TokenBatch::pack(src);
  b.target_in = TokenBatch::pack(tgt_in);
  const int l = b.target_in.max_len;
  b.target_out.assign(static_cast<std::size_t>(b.target_in.batch * l), kPadId);
  b.weights.assign(b.target_out.size(), 0.0f);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& target = pairs[static_cast<std::size_t>(rows[i])].target;
    for (std::size_t t = 0; t <= target.size(); ++t) {
      const std::size_t k = i * static_cast<std::size_t>(l) + t;
      b.target_out[k] = t < target.size() ? target[t] : kEosId;
      b.weights[k] = 1.0f;
    }
  }
  return b;
}

template <typename T>
Var<T> seq2seq_loss(const Seq2SeqModel<T>& model, Tape<T>& tape, const Seq2SeqBatch& batch, T smoothing) {
  auto logits = model.forward(tape, batch.source, batch.target_in);
  const auto rows = static_cast<std::int64_t>(batch.target_out.size());
  auto flat = reshape(logits, Shape{rows, model.config.vocab_size});
  std::vector<T> weights(batch.weights.begin(), batch.weights.end());
  return cross_entropy(flat, std::span<const int>(batch.target_out), smoothing, std::span<const T>(weights));
}

template Var<float> seq2seq_loss(const Seq2SeqModel<float>&, Tape<float>&, const Seq2SeqBatch&, float);
template Var<double> seq2seq_loss(const Seq2SeqModel<double>&, Tape<double>&, const Seq2SeqBatch&, double);

std::vector<ParamSlot<float>> seq2seq_slots(Seq2SeqModel<float>& model, const Tape<float>& tape) {
  std::vector<ParamSlot<float>> slots;
  model.visit([&](const std::string& name, Tensor<float>& t) {
    const bool matrix = t.rank() >= 2 || name.ends_with(".mix.packed");
    const bool positional = name == "src_pos" || name == "tgt_pos";
    slots.push_back({name, &t, tape.grad_of(t), matrix && !positional});
  });
  return slots;
}

double evaluate_exact_match(const Seq2SeqModel<float>& model, const std::vector<SequencePair>& pairs,
                            std::int64_t limit) {
  const std::size_t n = limit > 0 ? std::min(pairs.size(), static_cast<std::size_t>(limit)) : pairs.size();
  if (n == 0) throw ContractError("evaluate_exact_match: no pairs");
  std::size_t hits = 0;
  const std::size_t chunk = 250;
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::vector<int>> sources;
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) sources.push_back(pairs[i].source);
    const auto hyps = greedy_decode_batch(model, sources, model.config.max_len);
    for (std::size_t i = 0; i < hyps.size(); ++i) hits += hyps[i] == pairs[start + i].target ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

// Shuffled order, grouped into windows of 64 batches sorted by source
// length, then batches emitted in shuffled order.
std::vector<std::vector<std::int64_t>> bucketed_batches(const std::vector<SequencePair>& pairs, int batch_size,
                                                        std::uint64_t seed, int epoch) {
  auto order = epoch_order(static_cast<std::int64_t>(pairs.size()), seed, epoch, true);
  const std::size_t window = static_cast<std::size_t>(batch_size) * 64;
  for (std::size_t start = 0; start < order.size(); start += window) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + window));
    std::stable_sort(first, last, [&](std::int64_t a, std::int64_t b) {
      return pairs[static_cast<std::size_t>(a)].source.size() < pairs[static_cast<std::size_t>(b)].source.size();
    });
  }
  std::vector<std::vector<std::int64_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
  }
  Rng rng(derive_seed(seed, 0xba7c0000ULL + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = batches.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(batches[i - 1], batches[pick(rng.engine())]);
  }
  return batches;
}

}  // namespace

TrainReport fit_seq2seq(Seq2SeqModel<float>& model, const std::vector<SequencePair>& train,
                        const std::vector<SequencePair>& held_out, const TrainConfig& cfg,
                        const Seq2SeqFitOptions& options) {
  cfg.validate();
  if (train.empty() || held_out.empty()) throw ConfigError("seq2seq training needs training and held-out pairs");
  for (const auto* set : {&train, &held_out}) {
    for (const auto& p : *set) {
      if (static_cast<int>(p.source.size()) > model.config.max_len ||
          static_cast<int>(p.target.size()) + 1 > model.config.max_len) {
        throw CapacityError("a pair is longer than the model capacity " + std::to_string(model.config.max_len));
      }
    }
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

  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(train.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const Schedule schedule = cfg.schedule_for(steps_per_epoch);
  Optimizer<float> optimizer(cfg.optimizer);
  const auto smoothing = static_cast<float>(cfg.label_smoothing);
  TrainReport report;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    double tokens = 0.0;
    for (const auto& rows : bucketed_batches(train, cfg.batch_size, cfg.seed, epoch)) {
      const auto batch = make_seq2seq_batch(train, rows);
      Tape<float> tape;
      auto loss = seq2seq_loss(model, tape, batch, smoothing);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step));
      }
      tape.backward(loss);
      auto slots = seq2seq_slots(model, tape);
      optimizer.step(slots, schedule.lr(cfg.lr, step));
      ++step;
      double count = 0;
      for (float w : batch.weights) count += w;
      loss_sum += value * count;
      tokens += count;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / std::max(1.0, tokens);
    rec.accuracy = evaluate_exact_match(model, held_out, options.eval_limit);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(rec);
    if (report.epochs.size() == 1 || rec.accuracy > report.best_accuracy) {
      report.best_accuracy = rec.accuracy;
      report.best_epoch = rec.epoch;
      if (!options.out_dir.empty()) {
        report.best_checkpoint = options.out_dir + "/best.ckpt";
        save_checkpoint(model, report.best_checkpoint, options.vocab);
      }
    }
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d loss %.6f exact %.4f seconds %.1f", rec.epoch, rec.loss, rec.accuracy,
                  rec.seconds);
    log(line);
    if (options.on_epoch) options.on_epoch(rec);
  }
  if (!options.out_dir.empty()) {
    report.final_checkpoint = options.out_dir + "/final.ckpt";
    save_checkpoint(model, report.final_checkpoint, options.vocab);
    report.write_csv(options.out_dir + "/train.csv");
  }
  return report;
}

}  // namespace resmlp
