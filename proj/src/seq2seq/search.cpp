// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "seq2seq/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace resmlp {

namespace {

struct Live {
  std::vector<int> prefix;  // bos + generated
  double log_prob = 0.0;
};

struct Candidate {
  double log_prob;
  double step;
  std::size_t beam;
  int token;
};

double finished_score(double log_prob, std::size_t length, bool normalize) {
  return normalize ? log_prob / static_cast<double>(std::max<std::size_t>(1, length)) : log_prob;
}

}  // namespace

Hypothesis beam_search(const StepScorer& scorer, const BeamOptions& options) {
  if (options.beam < 1) throw ConfigError("beam size must be at least 1");
  if (options.max_len < 1) throw ConfigError("max_len must be at least 1");
  std::vector<Live> live{{{kBosId}, 0.0}};
  std::vector<Hypothesis> done;
  for (int step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& h : live) prefixes.push_back(h.prefix);
    const auto scores = scorer(prefixes);
    if (scores.size() != live.size()) throw ContractError("beam_search: scorer returned the wrong number of rows");
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      for (std::size_t t = 0; t < scores[b].size(); ++t) {
        if (t == static_cast<std::size_t>(kPadId) || t == static_cast<std::size_t>(kBosId)) continue;
        cands.push_back({live[b].log_prob + scores[b][t], scores[b][t], b, static_cast<int>(t)});
      }
    }
    // Finished hypotheses shrink the beam.
    const std::size_t width = static_cast<std::size_t>(options.beam) - done.size();
    const std::size_t keep = std::min(cands.size(), width);
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.beam != b.beam) return a.beam < b.beam;
                        if (a.step != b.step) return a.step > b.step;
                        return a.token < b.token;
                      });
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      const auto& parent = live[c.beam];
      if (c.token == kEosId) {
        Hypothesis h;
        h.tokens.assign(parent.prefix.begin() + 1, parent.prefix.end());
        h.log_prob = c.log_prob;
        h.finished = true;
        h.score = finished_score(c.log_prob, h.tokens.size() + 1, options.length_normalize);
        done.push_back(std::move(h));
      } else {
        Live child{parent.prefix, c.log_prob};
        child.prefix.push_back(c.token);
        next.push_back(std::move(child));
      }
    }
    live = std::move(next);
  }
  for (const auto& h : live) {
    Hypothesis out;
    out.tokens.assign(h.prefix.begin() + 1, h.prefix.end());
    out.log_prob = h.log_prob;
    out.score = finished_score(h.log_prob, out.tokens.size(), options.length_normalize);
    done.push_back(std::move(out));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < done.size(); ++i) {
    if (done[i].score > done[best].score) best = i;
  }
  return done[best];
}

Hypothesis greedy_decode(const StepScorer& scorer, int max_len) {
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  Hypothesis h;
  std::vector<int> prefix{kBosId};
  for (int step = 0; step < max_len; ++step) {
    const auto row = scorer({prefix}).at(0);
    int arg = -1;
    for (int t = 0; t < static_cast<int>(row.size()); ++t) {
      if (t == kPadId || t == kBosId) continue;
      if (arg < 0 || row[static_cast<std::size_t>(t)] > row[static_cast<std::size_t>(arg)]) arg = t;
    }
    h.log_prob += row[static_cast<std::size_t>(arg)];
    if (arg == kEosId) {
      h.finished = true;
      break;
    }
    prefix.push_back(arg);
  }
  h.tokens.assign(prefix.begin() + 1, prefix.end());
  h.score = h.log_prob;
  return h;
}

namespace {

std::vector<std::vector<double>> last_log_softmax(const Tensor<float>& logits, const std::vector<int>& positions) {
  const std::int64_t b = logits.dim(0);
  const std::int64_t l = logits.dim(1);
  const std::int64_t v = logits.dim(2);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(b), std::vector<double>(static_cast<std::size_t>(v)));
  for (std::int64_t i = 0; i < b; ++i) {
    const float* row = logits.data() + (i * l + positions[static_cast<std::size_t>(i)]) * v;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t k = 0; k < v; ++k) mx = std::max(mx, static_cast<double>(row[k]));
    double sum = 0;
    for (std::int64_t k = 0; k < v; ++k) sum += std::exp(static_cast<double>(row[k]) - mx);
    const double lse = mx + std::log(sum);
    for (std::int64_t k = 0; k < v; ++k) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = row[k] - lse;
  }
  return out;
}

Tensor<float> repeat_rows(const Tensor<float>& memory, std::int64_t times) {
  const std::int64_t per = static_cast<std::int64_t>(memory.size());
  Shape s = memory.shape();
  s[0] = times;
  Tensor<float> out(s);
  for (std::int64_t i = 0; i < times; ++i) std::copy(memory.data(), memory.data() + per, out.data() + i * per);
  return out;
}

}  // namespace

StepScorer model_scorer(const Seq2SeqModel<float>& model, const std::vector<int>& source) {
  auto memory = std::make_shared<Tensor<float>>();
  {
    Tape<float> tape(false);
    *memory = model.encode(tape, TokenBatch::pack({source})).value();
  }
  const int src_len = static_cast<int>(source.size());
  return [&model, memory, src_len](const std::vector<std::vector<int>>& prefixes) {
    const auto n = static_cast<std::int64_t>(prefixes.size());
    Tape<float> tape(false);
    auto mem = tape.constant(repeat_rows(*memory, n));
    const std::vector<int> lengths(static_cast<std::size_t>(n), src_len);
    const auto batch = TokenBatch::pack(prefixes);
    auto logits = model.decode(mem, std::span<const int>(lengths), model.embed_target(tape, batch));
    std::vector<int> positions;
    for (const auto& p : prefixes) positions.push_back(static_cast<int>(p.size()) - 1);
    return last_log_softmax(logits.value(), positions);
  };
}

std::vector<std::vector<int>> greedy_decode_batch(const Seq2SeqModel<float>& model,
                                                  const std::vector<std::vector<int>>& sources, int max_len) {
  if (sources.empty()) return {};
  Tape<float> enc_tape(false);
  const auto src = TokenBatch::pack(sources);
  auto memory = model.encode(enc_tape, src);
  const auto n = sources.size();
  std::vector<std::vector<int>> prefixes(n, std::vector<int>{kBosId});
  std::vector<bool> finished(n, false);
  const int steps = std::min(max_len, model.config.max_len);
  for (int step = 0; step < steps; ++step) {
    Tape<float> tape(false);
    auto mem = tape.constant(memory.value());
    auto logits = model.decode(mem, std::span<const int>(src.lengths), model.embed_target(tape, TokenBatch::pack(prefixes)));
    const auto& lv = logits.value();
    const std::int64_t l = lv.dim(1);
    const std::int64_t v = lv.dim(2);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (finished[i]) {
        prefixes[i].push_back(kPadId);
        continue;
      }
      const float* row = lv.data() + (static_cast<std::int64_t>(i) * l + step) * v;
      int arg = -1;
      for (int t = 0; t < v; ++t) {
        if (t == kPadId || t == kBosId) continue;
        if (arg < 0 || row[t] > row[arg]) arg = t;
      }
      prefixes[i].push_back(arg);
      if (arg == kEosId) finished[i] = true;
      else any = true;
    }
    if (!any) break;
  }
  std::vector<std::vector<int>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 1; t < prefixes[i].size(); ++t) {
      if (prefixes[i][t] == kEosId || prefixes[i][t] == kPadId) break;
      out[i].push_back(prefixes[i][t]);
    }
  }
  return out;
}

double corpus_bleu(const std::vector<std::vector<int>>& hypotheses, const std::vector<std::vector<int>>& references) {
  if (hypotheses.size() != references.size()) throw DimensionError("corpus_bleu: hypothesis/reference count differs");
  double matches[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double hyp_len = 0;
  double ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& h = hypotheses[s];
    const auto& r = references[s];
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<int>, int> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[std::vector<int>(r.begin() + i, r.begin() + i + n)];
      std::map<std::vector<int>, int> hyp_counts;
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hyp_counts[std::vector<int>(h.begin() + i, h.begin() + i + n)];
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
        totals[n - 1] += count;
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_precision = 0;
  for (int n = 0; n < 4; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_precision += 0.25 * std::log(matches[n] / totals[n]);
  }
  const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return bp * std::exp(log_precision);
}

}  // namespace resmlp
