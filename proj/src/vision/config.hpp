// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "tensor/ops.hpp"

namespace resmlp {

enum class Pooling { average, class_mlp };
enum class Communication { linear, none, mlp };
enum class PreNorm { affine, layernorm };

Pooling parse_pooling(std::string_view name);
Communication parse_communication(std::string_view name);
PreNorm parse_pre_norm(std::string_view name);
const char* to_string(Pooling p) noexcept;
const char* to_string(Communication c) noexcept;
const char* to_string(PreNorm n) noexcept;

// Architecture of a ResMLP image classifier. Defaults are the S12 preset.
struct ModelConfig {
  int image_size = 224;
  int patch_size = 16;
  int channels = 3;
  int dim = 384;
  int depth = 12;
  int num_classes = 1000;
  Pooling pooling = Pooling::average;
  Communication communication = Communication::linear;
  double comm_expansion = 1.0;  // hidden width of the token MLP, as a multiple of N^2
  Activation activation = Activation::gelu;
  PreNorm pre_norm = PreNorm::affine;
  bool post_affine_bias = false;
  bool positional_embedding = false;
  std::optional<double> layerscale_init;  // unset: chosen from depth
  bool class_mlp_stop_gradient = false;

  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }
  int patch_dim() const { return channels * patch_size * patch_size; }
  int hidden() const { return 4 * dim; }
  int comm_hidden() const;
  double layerscale() const;

  // Throws ConfigError naming the violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// LayerScale initial value by depth: 0.1 up to 18 blocks, 1e-5 up to 24, 1e-6 beyond.
double default_layerscale(int depth);

// Named presets: S12, S24, S36, B12, B24, optionally suffixed with a patch
// size, e.g. "S12/8" or "B24/8".
ModelConfig preset_config(std::string_view name);

// Exact learnable-scalar count:
//   patch embedding   d*(C p^2) + d
//   positional table  N^2 d (optional)
//   per block         cross-patch: norm 2d + A (N^2)^2 + N^2 + LayerScale d (+ d bias)
//                     cross-channel: norm 2d + 4d*d + 4d + d*4d + d + LayerScale d (+ d bias)
//   final norm        2d
//   class-MLP head    class token d + 2 x (aggregation N^2+2 + the two sublayers above)
//   classifier        K d + K
std::uint64_t count_params(const ModelConfig& cfg);

// Multiply-accumulates per image over patch embedding, token mixing, the
// channel MLPs, the class-MLP head and the classifier. Affine transforms,
// activations, residual adds and pooling are not counted.
std::uint64_t count_flops(const ModelConfig& cfg);

// Short deterministic identifier, e.g. "resmlp-d12-w384-p16-i224".
std::string model_id(const ModelConfig& cfg);

}  // namespace resmlp
