// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "vision/config.hpp"

#include <cmath>

namespace resmlp {

Pooling parse_pooling(std::string_view name) {
  if (name == "average") return Pooling::average;
  if (name == "class_mlp") return Pooling::class_mlp;
  throw ConfigError("unknown pooling '" + std::string(name) + "'");
}

Communication parse_communication(std::string_view name) {
  if (name == "linear") return Communication::linear;
  if (name == "none") return Communication::none;
  if (name == "mlp") return Communication::mlp;
  throw ConfigError("unknown communication '" + std::string(name) + "'");
}

PreNorm parse_pre_norm(std::string_view name) {
  if (name == "affine") return PreNorm::affine;
  if (name == "layernorm") return PreNorm::layernorm;
  throw ConfigError("unknown pre_norm '" + std::string(name) + "'");
}

const char* to_string(Pooling p) noexcept {
  return p == Pooling::average ? "average" : "class_mlp";
}

const char* to_string(Communication c) noexcept {
  switch (c) {
    case Communication::linear: return "linear";
    case Communication::none: return "none";
    case Communication::mlp: return "mlp";
  }
  return "?";
}

const char* to_string(PreNorm n) noexcept {
  return n == PreNorm::affine ? "affine" : "layernorm";
}

int ModelConfig::comm_hidden() const {
  const long h = std::lround(comm_expansion * static_cast<double>(tokens()));
  return h < 1 ? 1 : static_cast<int>(h);
}

double default_layerscale(int depth) {
  if (depth <= 18) return 0.1;
  if (depth <= 24) return 1e-5;
  return 1e-6;
}

double ModelConfig::layerscale() const {
  return layerscale_init ? *layerscale_init : default_layerscale(depth);
}

void ModelConfig::validate() const {
  if (image_size <= 0) throw ConfigError("image_size must be positive");
  if (patch_size <= 0) throw ConfigError("patch_size must be positive");
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (channels <= 0) throw ConfigError("channels must be positive");
  if (dim <= 0) throw ConfigError("dim must be positive");
  if (depth <= 0) throw ConfigError("depth must be positive");
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  if (!(comm_expansion > 0.0) || !std::isfinite(comm_expansion)) {
    throw ConfigError("comm_expansion must be positive");
  }
  if (layerscale_init && !std::isfinite(*layerscale_init)) {
    throw ConfigError("layerscale_init must be finite");
  }
}

ModelConfig preset_config(std::string_view name) {
  std::string_view base = name;
  std::optional<int> patch;
  if (auto slash = name.find('/'); slash != std::string_view::npos) {
    base = name.substr(0, slash);
    const std::string digits(name.substr(slash + 1));
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("bad patch suffix in preset '" + std::string(name) + "'");
    }
    patch = std::stoi(digits);
  }
  ModelConfig cfg;
  if (base == "S12") {
    cfg.depth = 12;
    cfg.dim = 384;
  } else if (base == "S24") {
    cfg.depth = 24;
    cfg.dim = 384;
  } else if (base == "S36") {
    cfg.depth = 36;
    cfg.dim = 384;
  } else if (base == "B12") {
    cfg.depth = 12;
    cfg.dim = 768;
  } else if (base == "B24") {
    cfg.depth = 24;
    cfg.dim = 768;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  if (patch) cfg.patch_size = *patch;
  cfg.validate();
  return cfg;
}

namespace {

std::uint64_t u(long long v) { return static_cast<std::uint64_t>(v); }

}  // namespace

std::uint64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const auto d = u(cfg.dim);
  const auto tokens = u(cfg.tokens());
  const auto hid = u(cfg.hidden());
  const auto norm = 2 * d;
  const auto post = cfg.post_affine_bias ? 2 * d : d;
  const auto channel_mlp = norm + hid * d + hid + d * hid + d + post;

  std::uint64_t mix = 0;
  switch (cfg.communication) {
    case Communication::linear: mix = tokens * tokens + tokens; break;
    case Communication::mlp: {
      const auto h = u(cfg.comm_hidden());
      mix = h * tokens + h + tokens * h + tokens;
      break;
    }
    case Communication::none: break;
  }
  const auto cross_patch = cfg.communication == Communication::none ? 0 : norm + mix + post;

  std::uint64_t total = d * u(cfg.patch_dim()) + d;
  if (cfg.positional_embedding) total += tokens * d;
  total += u(cfg.depth) * (cross_patch + channel_mlp);
  total += norm;
  if (cfg.pooling == Pooling::class_mlp) {
    const auto aggregation = norm + (tokens + 1) + 1 + post;
    total += d + 2 * (aggregation + channel_mlp);
  }
  total += u(cfg.num_classes) * d + u(cfg.num_classes);
  return total;
}

std::uint64_t count_flops(const ModelConfig& cfg) {
  cfg.validate();
  const auto d = u(cfg.dim);
  const auto tokens = u(cfg.tokens());
  const auto hid = u(cfg.hidden());
  std::uint64_t mix = 0;
  switch (cfg.communication) {
    case Communication::linear: mix = tokens * tokens * d; break;
    case Communication::mlp: mix = 2 * tokens * u(cfg.comm_hidden()) * d; break;
    case Communication::none: break;
  }
  std::uint64_t total = tokens * u(cfg.patch_dim()) * d;
  total += u(cfg.depth) * (mix + 2 * tokens * d * hid);
  if (cfg.pooling == Pooling::class_mlp) total += 2 * ((tokens + 1) * d + 2 * d * hid);
  total += d * u(cfg.num_classes);
  return total;
}

std::string model_id(const ModelConfig& cfg) {
  std::string id = "resmlp-d" + std::to_string(cfg.depth) + "-w" + std::to_string(cfg.dim) + "-p" +
                   std::to_string(cfg.patch_size) + "-i" + std::to_string(cfg.image_size);
  if (cfg.pooling == Pooling::class_mlp) id += "-clsmlp";
  if (cfg.communication != Communication::linear) id += std::string("-") + to_string(cfg.communication);
  return id;
}

}  // namespace resmlp
