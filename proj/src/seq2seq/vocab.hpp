// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace resmlp {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;

// Token <-> id bijection. Ids 0, 1, 2 are always <pad>, <bos>, <eos>.
class Vocabulary {
 public:
  Vocabulary();

  // One token per line, line number = id. The first three lines must be the
  // reserved tokens.
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int add(const std::string& token);
  int id(std::string_view token) const;  // DataError if unknown
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  // Whitespace-separated tokens -> ids (no bos/eos).
  std::vector<int> encode(std::string_view text) const;
  // Ids -> space-joined tokens, stopping at eos and skipping pad/bos.
  std::string decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// ids [batch x max_len], zero padded.
struct TokenBatch {
  int batch = 0;
  int max_len = 0;
  std::vector<int> ids;
  std::vector<int> lengths;

  // Pads to the longest sequence (at least 1 column).
  static TokenBatch pack(const std::vector<std::vector<int>>& sequences);
  int at(int b, int t) const { return ids[static_cast<std::size_t>(b * max_len + t)]; }
};

}  // namespace resmlp
