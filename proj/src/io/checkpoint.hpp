// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <string>

#include "seq2seq/model.hpp"
#include "vision/model.hpp"

namespace resmlp {

// File layout:
//   "RMLP" | u32 version | u64 header bytes | UTF-8 header | f32 LE payload | u32 CRC-32(payload)
// The header holds `key = value` model settings followed by one line per
// tensor: `tensor <name> <d0,d1,...> f32 <byte offset>`. Offsets are relative
// to the payload start, strictly increasing and contiguous.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind { vision, seq2seq };

void save_checkpoint(const VisionModel<float>& model, const std::string& path);
// A vocabulary, when given, is stored as `vocab <token>` header lines.
void save_checkpoint(const Seq2SeqModel<float>& model, const std::string& path, const Vocabulary* vocab = nullptr);

// Reconstructs the model from the header alone. Any failed integrity check
// raises CorruptCheckpointError naming the check.
VisionModel<float> load_vision_checkpoint(const std::string& path);
// `vocab` receives the stored vocabulary, or the toy vocabulary of the
// model's size when none was stored.
Seq2SeqModel<float> load_seq2seq_checkpoint(const std::string& path, Vocabulary* vocab = nullptr);

CheckpointKind checkpoint_kind(const std::string& path);

}  // namespace resmlp
