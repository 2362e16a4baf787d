// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "common/error.hpp"

namespace resmlp {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::rank: return "rank error";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::data: return "data error";
    case ErrorKind::capacity: return "capacity error";
    case ErrorKind::invariant: return "invariant error";
    case ErrorKind::corrupt_checkpoint: return "corrupt checkpoint";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::training: return "training error";
  }
  return "error";
}

namespace {

const char* check_name(CheckpointCheck check) {
  switch (check) {
    case CheckpointCheck::magic: return "magic";
    case CheckpointCheck::version: return "version";
    case CheckpointCheck::header: return "header";
    case CheckpointCheck::manifest: return "manifest";
    case CheckpointCheck::crc: return "crc";
  }
  return "unknown";
}

}  // namespace

CorruptCheckpointError::CorruptCheckpointError(CheckpointCheck check, const std::string& what)
    : Error(ErrorKind::corrupt_checkpoint,
            std::string("corrupt checkpoint (") + check_name(check) + " check failed): " + what),
      check_(check) {}

ParseError::ParseError(int line, const std::string& what)
    : Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + what), line_(line) {}

}  // namespace resmlp
