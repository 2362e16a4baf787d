// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "seq2seq/tasks.hpp"

#include <algorithm>
#include <string>

#include "common/error.hpp"
#include "common/random.hpp"

namespace resmlp {

ToyTask parse_toy_task(std::string_view name) {
  if (name == "copy") return ToyTask::copy;
  if (name == "reverse" || name == "reversal") return ToyTask::reverse;
  throw ConfigError("unknown toy task '" + std::string(name) + "'");
}

const char* to_string(ToyTask task) noexcept { return task == ToyTask::copy ? "copy" : "reverse"; }

std::vector<SequencePair> make_toy_pairs(ToyTask task, std::int64_t count, int vocab_size, int min_len, int max_len,
                                         std::uint64_t seed) {
  if (vocab_size < 4) throw ConfigError("toy vocabulary needs at least one non-reserved token");
  if (min_len < 1 || max_len < min_len) throw ConfigError("toy lengths must satisfy 1 <= min_len <= max_len");
  Rng rng(seed);
  std::vector<SequencePair> pairs(static_cast<std::size_t>(count));
  for (auto& p : pairs) {
    const int len = rng.integer(min_len, max_len);
    p.source.resize(static_cast<std::size_t>(len));
    for (auto& t : p.source) t = rng.integer(3, vocab_size - 1);
    p.target = p.source;
    if (task == ToyTask::reverse) std::reverse(p.target.begin(), p.target.end());
  }
  return pairs;
}

Vocabulary toy_vocabulary(int vocab_size) {
  Vocabulary v;
  for (int id = 3; id < vocab_size; ++id) {
    const int k = id - 3;
    if (k < 26) v.add(std::string(1, static_cast<char>('a' + k)));
    else if (k < 52) v.add(std::string(1, static_cast<char>('A' + k - 26)));
    else v.add("w" + std::to_string(id));
  }
  return v;
}

double exact_match(const std::vector<std::vector<int>>& hypotheses, const std::vector<SequencePair>& pairs) {
  if (hypotheses.size() != pairs.size()) throw DimensionError("exact_match: count mismatch");
  if (pairs.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) hits += hypotheses[i] == pairs[i].target ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

}  // namespace resmlp
