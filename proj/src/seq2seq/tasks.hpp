// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "seq2seq/vocab.hpp"

namespace resmlp {

struct SequencePair {
  std::vector<int> source;  // no bos/eos
  std::vector<int> target;
};

enum class ToyTask { copy, reverse };

ToyTask parse_toy_task(std::string_view name);
const char* to_string(ToyTask task) noexcept;

// Uniform random token strings over the non-reserved ids, lengths uniform in
// [min_len, max_len]; the target is the source itself or its reversal.
std::vector<SequencePair> make_toy_pairs(ToyTask task, std::int64_t count, int vocab_size, int min_len, int max_len,
                                         std::uint64_t seed);

// <pad> <bos> <eos> followed by single-letter names a..z, A..Z, then w<id>.
Vocabulary toy_vocabulary(int vocab_size);

// Fraction of hypotheses equal to their reference target.
double exact_match(const std::vector<std::vector<int>>& hypotheses, const std::vector<SequencePair>& pairs);

}  // namespace resmlp
