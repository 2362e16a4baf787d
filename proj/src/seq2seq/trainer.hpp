// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "seq2seq/model.hpp"
#include "seq2seq/tasks.hpp"
#include "train/trainer.hpp"

namespace resmlp {

struct Seq2SeqFitOptions {
  std::string out_dir;  // empty: nothing is written
  std::ostream* log = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
  std::int64_t eval_limit = 1000;  // held-out pairs decoded per epoch
  const Vocabulary* vocab = nullptr;  // stored in written checkpoints
};

// Teacher-forcing batch: inputs are bos + target, outputs target + eos.
struct Seq2SeqBatch {
  TokenBatch source;
  TokenBatch target_in;
  std::vector<int> target_out;  // [batch * target_in.max_len], pad where masked
  std::vector<float> weights;    // 1 on real positions, 0 on padding
};

Seq2SeqBatch make_seq2seq_batch(const std::vector<SequencePair>& pairs, std::span<const std::int64_t> rows);

// Mean token cross entropy over unmasked positions.
template <typename T>
Var<T> seq2seq_loss(const Seq2SeqModel<T>& model, Tape<T>& tape, const Seq2SeqBatch& batch, T smoothing);

std::vector<ParamSlot<float>> seq2seq_slots(Seq2SeqModel<float>& model, const Tape<float>& tape);

// Greedy exact-match accuracy on the first `limit` pairs.
double evaluate_exact_match(const Seq2SeqModel<float>& model, const std::vector<SequencePair>& pairs,
                            std::int64_t limit = 0);

// Trains with length-bucketed batches (order fixed by cfg.seed); per-epoch
// accuracy is greedy exact match on the held-out pairs.
TrainReport fit_seq2seq(Seq2SeqModel<float>& model, const std::vector<SequencePair>& train,
                        const std::vector<SequencePair>& held_out, const TrainConfig& cfg,
                        const Seq2SeqFitOptions& options = {});

}  // namespace resmlp
