// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "seq2seq/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "common/error.hpp"

namespace resmlp {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<bos>");
  add("<eos>");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path);
  Vocabulary v;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no < 3) {
      if (line != v.tokens_[static_cast<std::size_t>(line_no)]) {
        throw DataError(path + ": line " + std::to_string(line_no + 1) + " must be " +
                        v.tokens_[static_cast<std::size_t>(line_no)]);
      }
    } else {
      if (line.empty()) throw DataError(path + ": empty token on line " + std::to_string(line_no + 1));
      if (v.contains(line)) throw DataError(path + ": duplicate token '" + line + "'");
      v.add(line);
    }
    ++line_no;
  }
  if (line_no < 3) throw DataError(path + ": missing reserved tokens");
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw DataError("unknown token '" + std::string(token) + "'");
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) ids.push_back(id(tok));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEosId) break;
    if (id == kPadId || id == kBosId) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

TokenBatch TokenBatch::pack(const std::vector<std::vector<int>>& sequences) {
  TokenBatch b;
  b.batch = static_cast<int>(sequences.size());
  b.max_len = 1;
  for (const auto& s : sequences) b.max_len = std::max(b.max_len, static_cast<int>(s.size()));
  b.ids.assign(static_cast<std::size_t>(b.batch * b.max_len), kPadId);
  for (int i = 0; i < b.batch; ++i) {
    const auto& s = sequences[static_cast<std::size_t>(i)];
    if (s.empty()) throw DataError("TokenBatch: empty sequence");
    std::copy(s.begin(), s.end(), b.ids.begin() + i * b.max_len);
    b.lengths.push_back(static_cast<int>(s.size()));
  }
  return b;
}

}  // namespace resmlp
