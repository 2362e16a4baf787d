// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <stdexcept>
#include <string>

namespace resmlp {

enum class ErrorKind {
  dimension,
  rank,
  configuration,
  contract,
  data,
  capacity,
  invariant,
  corrupt_checkpoint,
  parse,
  io,
  training,
};

const char* to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so the C API can map it
// onto a stable status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define RESMLP_DEFINE_ERROR(Name, kind_value)                                  \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& what) : Error(ErrorKind::kind_value, what) {} \
  };

RESMLP_DEFINE_ERROR(DimensionError, dimension)
RESMLP_DEFINE_ERROR(RankError, rank)
RESMLP_DEFINE_ERROR(ConfigError, configuration)
RESMLP_DEFINE_ERROR(ContractError, contract)
RESMLP_DEFINE_ERROR(DataError, data)
RESMLP_DEFINE_ERROR(CapacityError, capacity)
RESMLP_DEFINE_ERROR(InvariantError, invariant)
RESMLP_DEFINE_ERROR(IoError, io)
RESMLP_DEFINE_ERROR(TrainingError, training)

#undef RESMLP_DEFINE_ERROR

// Which integrity check a checkpoint failed.
enum class CheckpointCheck { magic, version, header, manifest, crc };

class CorruptCheckpointError : public Error {
 public:
  CorruptCheckpointError(CheckpointCheck check, const std::string& what);
  CheckpointCheck check() const noexcept { return check_; }

 private:
  CheckpointCheck check_;
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what);
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace resmlp
