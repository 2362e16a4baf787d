// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <functional>
#include <vector>

#include "seq2seq/model.hpp"

namespace resmlp {

// Next-token log-probabilities for a set of equal-length prefixes, each
// starting with bos: returns one row of vocabulary size per prefix.
using StepScorer = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<int>>& prefixes)>;

struct BeamOptions {
  int beam = 4;
  int max_len = 0;  // generated tokens, eos included; must be positive
  bool length_normalize = true;  // rank finished hypotheses by log-prob / length
};

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens, without bos and eos
  double log_prob = 0.0;
  double score = 0.0;
  bool finished = false;  // ended with eos rather than at max_len
};

// Candidates at each step are ranked by cumulative log-prob, ties by beam
// position and then by token id. A candidate ending in eos leaves the beam.
// With beam == 1 this is exactly greedy decoding.
Hypothesis beam_search(const StepScorer& scorer, const BeamOptions& options);

// Argmax at every step (lowest id on ties) until eos or max_len.
Hypothesis greedy_decode(const StepScorer& scorer, int max_len);

// Scorer for one source sequence of a trained model.
StepScorer model_scorer(const Seq2SeqModel<float>& model, const std::vector<int>& source);

// Batched greedy decoding of many sources at once.
std::vector<std::vector<int>> greedy_decode_batch(const Seq2SeqModel<float>& model,
                                                  const std::vector<std::vector<int>>& sources, int max_len);

// Corpus BLEU-4 with uniform weights and brevity penalty, on token ids.
double corpus_bleu(const std::vector<std::vector<int>>& hypotheses, const std::vector<std::vector<int>>& references);

}  // namespace resmlp
