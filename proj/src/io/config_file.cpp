// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "io/config_file.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "common/error.hpp"

namespace resmlp {

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "synthetic") return DatasetKind::synthetic;
  if (name == "cifar10" || name == "cifar10_binary") return DatasetKind::cifar10_binary;
  if (name == "raw" || name == "raw_tensor_dir") return DatasetKind::raw_tensor_dir;
  throw ConfigError("unknown dataset kind '" + std::string(name) + "'");
}

const char* to_string(DatasetKind kind) noexcept {
  switch (kind) {
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::cifar10_binary: return "cifar10_binary";
    case DatasetKind::raw_tensor_dir: return "raw_tensor_dir";
  }
  return "?";
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename I>
I to_integer(std::string_view v) {
  I out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + std::string(v) + "'");
  return out;
}

double to_double(std::string_view v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

int positive(std::string_view v) {
  const int n = to_integer<int>(v);
  if (n < 1) throw ConfigError("must be positive, got " + std::string(v));
  return n;
}

std::int64_t positive64(std::string_view v) {
  const auto n = to_integer<std::int64_t>(v);
  if (n < 1) throw ConfigError("must be positive, got " + std::string(v));
  return n;
}

double non_negative(std::string_view v) {
  const double x = to_double(v);
  if (!(x >= 0)) throw ConfigError("must be non-negative, got " + std::string(v));
  return x;
}

std::vector<double> to_list(std::string_view v) {
  std::vector<double> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_double(trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string fmt(bool b) { return b ? "true" : "false"; }

std::string fmt(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt(xs[i]);
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define INT_FIELD(key, member, parse) \
  Field { key, [](const RunConfig& c) { return std::to_string(c.member); }, [](RunConfig& c, std::string_view v) { c.member = parse(v); } }
#define NUM_FIELD(key, member, parse) \
  Field { key, [](const RunConfig& c) { return fmt(c.member); }, [](RunConfig& c, std::string_view v) { c.member = parse(v); } }
#define ENUM_FIELD(key, member, parse) \
  Field { key, [](const RunConfig& c) { return std::string(to_string(c.member)); }, [](RunConfig& c, std::string_view v) { c.member = parse(v); } }
#define STR_FIELD(key, member) \
  Field { key, [](const RunConfig& c) { return c.member; }, [](RunConfig& c, std::string_view v) { c.member = std::string(v); } }

const std::vector<Field>& model_fields() {
  static const std::vector<Field> fields = {
      INT_FIELD("model.image_size", model.image_size, positive),
      INT_FIELD("model.patch_size", model.patch_size, positive),
      INT_FIELD("model.channels", model.channels, positive),
      INT_FIELD("model.dim", model.dim, positive),
      INT_FIELD("model.depth", model.depth, positive),
      INT_FIELD("model.num_classes", model.num_classes, positive),
      ENUM_FIELD("model.pooling", model.pooling, parse_pooling),
      ENUM_FIELD("model.communication", model.communication, parse_communication),
      NUM_FIELD("model.comm_expansion", model.comm_expansion, to_double),
      ENUM_FIELD("model.activation", model.activation, parse_activation),
      ENUM_FIELD("model.pre_norm", model.pre_norm, parse_pre_norm),
      NUM_FIELD("model.post_affine_bias", model.post_affine_bias, to_bool),
      NUM_FIELD("model.positional_embedding", model.positional_embedding, to_bool),
      Field{"model.layerscale_init",
            [](const RunConfig& c) { return c.model.layerscale_init ? fmt(*c.model.layerscale_init) : "auto"; },
            [](RunConfig& c, std::string_view v) {
              if (v == "auto") {
                c.model.layerscale_init.reset();
              } else {
                c.model.layerscale_init = to_double(v);
              }
            }},
      NUM_FIELD("model.class_mlp_stop_gradient", model.class_mlp_stop_gradient, to_bool),
  };
  return fields;
}

const std::vector<Field>& train_fields() {
  static const std::vector<Field> fields = {
      ENUM_FIELD("train.optimizer", train.optimizer.kind, parse_optimizer),
      NUM_FIELD("train.lr", train.lr, non_negative),
      NUM_FIELD("train.weight_decay", train.optimizer.weight_decay, non_negative),
      NUM_FIELD("train.beta1", train.optimizer.beta1, non_negative),
      NUM_FIELD("train.beta2", train.optimizer.beta2, non_negative),
      NUM_FIELD("train.eps", train.optimizer.eps, non_negative),
      NUM_FIELD("train.momentum", train.optimizer.momentum, non_negative),
      INT_FIELD("train.epochs", train.epochs, positive),
      INT_FIELD("train.batch_size", train.batch_size, positive),
      ENUM_FIELD("train.schedule", train.schedule, parse_schedule),
      INT_FIELD("train.warmup_epochs", train.warmup_epochs, to_integer<int>),
      Field{"train.warmup_steps",
            [](const RunConfig& c) { return c.train.warmup_steps ? std::to_string(*c.train.warmup_steps) : "auto"; },
            [](RunConfig& c, std::string_view v) {
              if (v == "auto") {
                c.train.warmup_steps.reset();
              } else {
                c.train.warmup_steps = to_integer<std::int64_t>(v);
              }
            }},
      INT_FIELD("train.step_epochs", train.step_epochs, positive),
      NUM_FIELD("train.step_gamma", train.step_gamma, non_negative),
      NUM_FIELD("train.label_smoothing", train.label_smoothing, non_negative),
      INT_FIELD("train.seed", train.seed, to_integer<std::uint64_t>),
      ENUM_FIELD("train.mode", train.mode, parse_train_mode),
      STR_FIELD("train.teacher", train.teacher),
      NUM_FIELD("train.distill_weight", train.distill_weight, non_negative),
      NUM_FIELD("train.augment", train.augment, to_bool),
  };
  return fields;
}

const std::vector<Field>& data_fields() {
  static const std::vector<Field> fields = {
      ENUM_FIELD("data.kind", data.kind, parse_dataset_kind),
      STR_FIELD("data.path", data.path),
      NUM_FIELD("data.mean", data.mean, to_list),
      NUM_FIELD("data.std", data.std, to_list),
      INT_FIELD("data.synthetic_train", data.synthetic_train, positive64),
      INT_FIELD("data.synthetic_test", data.synthetic_test, positive64),
      NUM_FIELD("data.synthetic_noise", data.synthetic_noise, non_negative),
      ENUM_FIELD("data.task", data.task, parse_toy_task),
      INT_FIELD("data.train_pairs", data.train_pairs, positive64),
      INT_FIELD("data.test_pairs", data.test_pairs, positive64),
      INT_FIELD("data.min_length", data.min_length, positive),
      INT_FIELD("data.max_length", data.max_length, positive),
      STR_FIELD("data.corpus", data.corpus),
      STR_FIELD("data.test_corpus", data.test_corpus),
      STR_FIELD("data.vocab", data.vocab),
  };
  return fields;
}

const std::vector<Field>& seq2seq_fields() {
  static const std::vector<Field> fields = {
      INT_FIELD("seq2seq.vocab_size", seq2seq.vocab_size, positive),
      INT_FIELD("seq2seq.dim", seq2seq.dim, positive),
      INT_FIELD("seq2seq.hidden", seq2seq.hidden, positive),
      INT_FIELD("seq2seq.encoder_depth", seq2seq.encoder_depth, positive),
      INT_FIELD("seq2seq.decoder_depth", seq2seq.decoder_depth, positive),
      INT_FIELD("seq2seq.heads", seq2seq.heads, positive),
      INT_FIELD("seq2seq.max_len", seq2seq.max_len, positive),
      ENUM_FIELD("seq2seq.activation", seq2seq.activation, parse_activation),
      ENUM_FIELD("seq2seq.pre_norm", seq2seq.pre_norm, parse_pre_norm),
      NUM_FIELD("seq2seq.layerscale_init", seq2seq.layerscale_init, to_double),
      NUM_FIELD("seq2seq.positional_embedding", seq2seq.positional_embedding, to_bool),
  };
  return fields;
}

#undef INT_FIELD
#undef NUM_FIELD
#undef ENUM_FIELD
#undef STR_FIELD

const Field* find_field(std::string_view key) {
  for (const auto* table : {&model_fields(), &train_fields(), &data_fields(), &seq2seq_fields()}) {
    for (const auto& f : *table) {
      if (key == f.key) return &f;
    }
  }
  return nullptr;
}

struct Line {
  int number;
  std::string_view key;
  std::string_view value;
};

void write_section(std::ostringstream& out, const RunConfig& cfg, const std::vector<Field>& fields) {
  for (const auto& f : fields) out << f.key << " = " << f.get(cfg) << '\n';
}

}  // namespace

RunConfig parse_config_text(std::string_view text) {
  std::vector<Line> lines;
  int number = 0;
  while (!text.empty() || number == 0) {
    ++number;
    const auto eol = text.find('\n');
    std::string_view raw = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    raw = trim(raw);
    if (raw.empty()) {
      if (text.empty()) break;
      continue;
    }
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos) throw ParseError(number, "expected 'key = value', got '" + std::string(raw) + "'");
    const auto key = trim(raw.substr(0, eq));
    const auto value = trim(raw.substr(eq + 1));
    if (key.empty()) throw ParseError(number, "missing key");
    lines.push_back({number, key, value});
  }

  RunConfig cfg;
  std::map<std::string_view, int> seen;
  std::map<std::string, int> last_line;
  for (const auto& line : lines) {
    if (auto [it, fresh] = seen.emplace(line.key, line.number); !fresh) {
      throw ParseError(line.number, "duplicate key '" + std::string(line.key) + "' (first set on line " +
                                        std::to_string(it->second) + ")");
    }
    if (line.key == "model.preset") {
      try {
        cfg.model = preset_config(line.value);
      } catch (const Error& e) {
        throw ParseError(line.number, "model.preset: " + std::string(e.what()));
      }
    }
  }
  for (const auto& line : lines) {
    const auto section = std::string(line.key.substr(0, line.key.find('.')));
    last_line[section] = line.number;
    if (line.key == "model.preset") continue;
    const Field* field = find_field(line.key);
    if (!field) throw ParseError(line.number, "unknown key '" + std::string(line.key) + "'");
    try {
      field->set(cfg, line.value);
    } catch (const Error& e) {
      throw ParseError(line.number, std::string(line.key) + ": " + e.what());
    }
  }

  auto check = [&](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      throw ParseError(last_line.count(section) ? last_line[section] : 0, e.what());
    }
  };
  check("model", [&] { cfg.model.validate(); });
  check("train", [&] { cfg.train.validate(); });
  check("seq2seq", [&] { cfg.seq2seq.validate(); });
  check("data", [&] {
    if (cfg.data.mean.size() != cfg.data.std.size()) throw ConfigError("data.mean and data.std differ in length");
    for (double s : cfg.data.std) {
      if (!(s > 0)) throw ConfigError("data.std entries must be positive");
    }
    if (cfg.data.min_length > cfg.data.max_length) throw ConfigError("data.min_length exceeds data.max_length");
  });
  return cfg;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const Field* field = key == "model.preset" ? nullptr : find_field(key);
  if (key != "model.preset" && !field) throw ConfigError("unknown key '" + std::string(key) + "'");
  RunConfig next = cfg;
  try {
    if (field) {
      field->set(next, trim(value));
    } else {
      next.model = preset_config(value);
    }
    next.model.validate();
    next.train.validate();
    next.seq2seq.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
  cfg = std::move(next);
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  write_section(out, cfg, model_fields());
  write_section(out, cfg, train_fields());
  write_section(out, cfg, data_fields());
  write_section(out, cfg, seq2seq_fields());
  return out.str();
}

std::string serialize_model_section(const ModelConfig& cfg) {
  RunConfig run;
  run.model = cfg;
  std::ostringstream out;
  write_section(out, run, model_fields());
  return out.str();
}

std::string serialize_seq2seq_section(const Seq2SeqConfig& cfg) {
  RunConfig run;
  run.seq2seq = cfg;
  std::ostringstream out;
  write_section(out, run, seq2seq_fields());
  return out.str();
}

}  // namespace resmlp
