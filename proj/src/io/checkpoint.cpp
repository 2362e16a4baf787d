// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "io/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "io/config_file.hpp"
#include "seq2seq/tasks.hpp"

namespace resmlp {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host order");

namespace {

constexpr char kMagic[4] = {'R', 'M', 'L', 'P'};
constexpr std::size_t kPreamble = 4 + 4 + 8;

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
};

struct Parsed {
  std::string kind;
  bool fused = false;
  std::string config_text;
  std::vector<ManifestEntry> manifest;
  std::vector<std::string> vocab;
  std::vector<char> payload;
};

std::string dims_string(const Shape& shape) {
  if (shape.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "") + std::to_string(shape[i]);
  return out;
}

std::uint32_t crc_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename Visit>
void write_file(const std::string& path, std::string header_prefix, Visit&& visit) {
  std::ostringstream header;
  header << header_prefix;
  std::uint64_t offset = 0;
  std::vector<const Tensor<float>*> tensors;
  visit([&](const std::string& name, const Tensor<float>& t) {
    header << "tensor " << name << ' ' << dims_string(t.shape()) << " f32 " << offset << '\n';
    offset += t.size() * sizeof(float);
    tensors.push_back(&t);
  });
  const std::string text = header.str();
  std::vector<char> payload;
  payload.reserve(offset);
  for (const auto* t : tensors) {
    const auto* bytes = reinterpret_cast<const char*>(t->data());
    payload.insert(payload.end(), bytes, bytes + t->size() * sizeof(float));
  }
  const std::uint32_t crc = crc_of(payload.data(), payload.size());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t header_bytes = text.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&header_bytes), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.write(reinterpret_cast<const char*>(&crc), 4);
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Shape parse_dims(std::string_view s) {
  Shape shape;
  if (s == "-") return shape;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const auto part = s.substr(0, comma);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || v < 1) {
      throw CorruptCheckpointError(CheckpointCheck::manifest, "bad extent '" + std::string(part) + "'");
    }
    shape.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return shape;
}

Parsed read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptCheckpointError(CheckpointCheck::magic, "'" + path + "' does not start with RMLP");
  }
  if (bytes.size() < kPreamble + 4) {
    throw CorruptCheckpointError(CheckpointCheck::crc, "file truncated at " + std::to_string(bytes.size()) + " bytes");
  }
  std::uint32_t version = 0;
  std::uint64_t header_bytes = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&header_bytes, bytes.data() + 8, 8);
  if (version != kCheckpointVersion) {
    throw CorruptCheckpointError(CheckpointCheck::version, "format version " + std::to_string(version) +
                                                               ", expected " + std::to_string(kCheckpointVersion));
  }
  if (header_bytes > bytes.size() - kPreamble - 4) {
    throw CorruptCheckpointError(CheckpointCheck::crc, "file truncated inside the header");
  }
  Parsed parsed;
  const char* payload_begin = bytes.data() + kPreamble + header_bytes;
  const std::size_t payload_size = bytes.size() - kPreamble - header_bytes - 4;
  std::uint32_t stored = 0;
  std::memcpy(&stored, payload_begin + payload_size, 4);
  if (crc_of(payload_begin, payload_size) != stored) {
    throw CorruptCheckpointError(CheckpointCheck::crc, "payload CRC-32 mismatch (file damaged or truncated)");
  }
  parsed.payload.assign(payload_begin, payload_begin + payload_size);

  std::istringstream header(std::string(bytes.data() + kPreamble, header_bytes));
  std::string line;
  std::ostringstream config;
  std::uint64_t expected_offset = 0;
  while (std::getline(header, line)) {
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream fields(line.substr(7));
      std::string name, dims, dtype;
      std::uint64_t offset = 0;
      if (!(fields >> name >> dims >> dtype >> offset) || dtype != "f32") {
        throw CorruptCheckpointError(CheckpointCheck::manifest, "malformed entry '" + line + "'");
      }
      if (offset != expected_offset) {
        throw CorruptCheckpointError(CheckpointCheck::manifest, "tensor " + name + " at offset " +
                                                                    std::to_string(offset) + ", expected " +
                                                                    std::to_string(expected_offset));
      }
      ManifestEntry entry{name, parse_dims(dims), offset};
      expected_offset += shape_size(entry.shape) * sizeof(float);
      parsed.manifest.push_back(std::move(entry));
    } else if (line.rfind("vocab ", 0) == 0) {
      parsed.vocab.push_back(line.substr(6));
    } else if (line.rfind("kind = ", 0) == 0) {
      parsed.kind = line.substr(7);
    } else if (line.rfind("fused = ", 0) == 0) {
      parsed.fused = line.substr(8) == "true";
    } else {
      config << line << '\n';
    }
  }
  if (expected_offset != payload_size) {
    throw CorruptCheckpointError(CheckpointCheck::manifest, "manifest covers " + std::to_string(expected_offset) +
                                                                " payload bytes, file has " +
                                                                std::to_string(payload_size));
  }
  if (parsed.kind != "vision" && parsed.kind != "seq2seq") {
    throw CorruptCheckpointError(CheckpointCheck::header, "missing or unknown kind '" + parsed.kind + "'");
  }
  parsed.config_text = config.str();
  return parsed;
}

RunConfig header_config(const Parsed& parsed) {
  try {
    return parse_config_text(parsed.config_text);
  } catch (const Error& e) {
    throw CorruptCheckpointError(CheckpointCheck::header, e.what());
  }
}

// Copies payload arrays into the skeleton, requiring the manifest to list
// exactly its tensors in visit order.
template <typename Model>
void fill(Model& model, const Parsed& parsed) {
  std::size_t index = 0;
  model.visit([&](const std::string& name, Tensor<float>& t) {
    if (index >= parsed.manifest.size()) {
      throw CorruptCheckpointError(CheckpointCheck::manifest, "tensor " + name + " missing");
    }
    const auto& entry = parsed.manifest[index++];
    if (entry.name != name || entry.shape != t.shape()) {
      throw CorruptCheckpointError(CheckpointCheck::manifest, "expected " + name + " " + shape_string(t.shape()) +
                                                                  ", found " + entry.name + " " +
                                                                  shape_string(entry.shape));
    }
    std::memcpy(t.data(), parsed.payload.data() + entry.offset, t.size() * sizeof(float));
  });
  if (index != parsed.manifest.size()) {
    throw CorruptCheckpointError(CheckpointCheck::manifest,
                                 "unexpected tensor " + parsed.manifest[index].name);
  }
}

}  // namespace

void save_checkpoint(const VisionModel<float>& model, const std::string& path) {
  model.config.validate();
  const std::string prefix = std::string("kind = vision\nfused = ") + (model.fused ? "true" : "false") + "\n" +
                             serialize_model_section(model.config);
  write_file(path, prefix, [&](auto&& fn) {
    model.visit(std::function<void(const std::string&, const Tensor<float>&)>(fn));
  });
}

void save_checkpoint(const Seq2SeqModel<float>& model, const std::string& path, const Vocabulary* vocab) {
  model.config.validate();
  std::string prefix = "kind = seq2seq\nfused = false\n" + serialize_seq2seq_section(model.config);
  if (vocab) {
    if (vocab->size() != model.config.vocab_size) {
      throw ContractError("vocabulary has " + std::to_string(vocab->size()) + " tokens, model expects " +
                          std::to_string(model.config.vocab_size));
    }
    for (int i = 0; i < vocab->size(); ++i) prefix += "vocab " + vocab->token(i) + "\n";
  }
  write_file(path, prefix, [&](auto&& fn) {
    model.visit(std::function<void(const std::string&, const Tensor<float>&)>(fn));
  });
}

VisionModel<float> load_vision_checkpoint(const std::string& path) {
  const Parsed parsed = read_file(path);
  if (parsed.kind != "vision") throw ContractError("'" + path + "' holds a " + parsed.kind + " model");
  const RunConfig cfg = header_config(parsed);
  auto model = VisionModel<float>::skeleton(cfg.model, parsed.fused);
  fill(model, parsed);
  return model;
}

Seq2SeqModel<float> load_seq2seq_checkpoint(const std::string& path, Vocabulary* vocab) {
  const Parsed parsed = read_file(path);
  if (parsed.kind != "seq2seq") throw ContractError("'" + path + "' holds a " + parsed.kind + " model");
  const RunConfig cfg = header_config(parsed);
  auto model = Seq2SeqModel<float>::skeleton(cfg.seq2seq);
  fill(model, parsed);
  if (vocab) {
    if (parsed.vocab.empty()) {
      *vocab = toy_vocabulary(cfg.seq2seq.vocab_size);
    } else {
      if (static_cast<int>(parsed.vocab.size()) != cfg.seq2seq.vocab_size) {
        throw CorruptCheckpointError(CheckpointCheck::header, "vocabulary size does not match the model");
      }
      Vocabulary v;
      for (std::size_t i = 3; i < parsed.vocab.size(); ++i) v.add(parsed.vocab[i]);
      *vocab = std::move(v);
    }
  }
  return model;
}

CheckpointKind checkpoint_kind(const std::string& path) {
  return read_file(path).kind == "vision" ? CheckpointKind::vision : CheckpointKind::seq2seq;
}

}  // namespace resmlp
