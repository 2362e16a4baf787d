// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vision/config.hpp"

namespace resmlp {

// Pre-normalisation. In the trained form this is Aff (alpha, beta) or
// LayerNorm (standardize + alpha, beta). After fusion the scale/shift may be
// folded away, leaving only standardisation or nothing at all.
template <typename T>
struct Norm {
  bool standardize = false;
  std::optional<Tensor<T>> alpha;
  std::optional<Tensor<T>> beta;
};

// Post transform on a residual branch: LayerScale, plus an optional shift
// when the full Aff form is requested.
template <typename T>
struct BranchScale {
  std::optional<Tensor<T>> scale;
  std::optional<Tensor<T>> bias;
};

template <typename T>
struct BlockParams {
  // Cross-patch sublayer; absent when communication == none.
  bool has_mix = true;
  Norm<T> norm1;
  Tensor<T> mix_weight;  // A: [N^2, N^2], or [h, N^2] for the token MLP
  Tensor<T> mix_bias;    // [rows]; [N^2, d] once fused
  std::optional<Tensor<T>> mix2_weight;  // token MLP second layer [N^2, h]
  std::optional<Tensor<T>> mix2_bias;
  BranchScale<T> post1;
  // Cross-channel sublayer.
  Norm<T> norm2;
  Tensor<T> fc1_weight;  // B: [4d, d]
  Tensor<T> fc1_bias;
  Tensor<T> fc2_weight;  // C: [d, 4d]
  Tensor<T> fc2_bias;
  BranchScale<T> post2;
};

// One class-MLP layer: a linear aggregation over [class; patches] that only
// updates the class vector, then a channel MLP on the class vector.
template <typename T>
struct ClassLayerParams {
  Norm<T> norm1;
  Tensor<T> agg_weight;  // [1, N^2 + 1]
  Tensor<T> agg_bias;    // [1]; [1, d] once fused
  BranchScale<T> post1;
  Norm<T> norm2;
  Tensor<T> fc1_weight;
  Tensor<T> fc1_bias;
  Tensor<T> fc2_weight;
  Tensor<T> fc2_bias;
  BranchScale<T> post2;
};

template <typename T>
struct VisionModel {
  ModelConfig config;
  bool fused = false;
  Tensor<T> patch_weight;  // [d, C p^2]
  Tensor<T> patch_bias;
  std::optional<Tensor<T>> pos_embed;  // [N^2, d]
  std::vector<BlockParams<T>> blocks;
  Norm<T> final_norm;
  std::optional<Tensor<T>> cls_token;  // [d]
  std::vector<ClassLayerParams<T>> class_layers;
  Tensor<T> head_weight;  // [K, d]
  Tensor<T> head_bias;

  // Freshly initialised model: truncated-normal (std 0.02) linear weights,
  // zero biases, identity pre-norms and LayerScale at config.layerscale().
  static VisionModel init(const ModelConfig& cfg, std::uint64_t seed);

  // Zero-filled model with the parameter layout of the trained (fused=false)
  // or inference (fused=true) form; used by the checkpoint loader.
  static VisionModel skeleton(const ModelConfig& cfg, bool fused);

  // Visits every parameter in a fixed order with a stable dotted name.
  void visit(const std::function<void(const std::string&, Tensor<T>&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;

  std::uint64_t parameter_count() const;

  // images [b, C, H, W] -> logits [b, K]. Parameters are bound on `tape`, so
  // tape.grad_of(param) yields gradients after tape.backward().
  Var<T> forward(Tape<T>& tape, const Tensor<T>& images) const;

  // Inference convenience (no gradients retained).
  Tensor<T> logits(const Tensor<T>& images) const;

  template <typename U>
  VisionModel<U> cast() const;
};

// image [C, H, W] -> [N^2, C p^2]; row i*N + j holds the patch at grid
// position (i, j), flattened channel-major, then row, then column.
// A batch [b, C, H, W] maps to [b, N^2, C p^2].
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int patch_size);

template <typename T>
Var<T> apply_norm(const Var<T>& x, const Norm<T>& norm, Tape<T>& tape);

template <typename T>
Var<T> apply_branch_scale(const Var<T>& x, const BranchScale<T>& post, Tape<T>& tape);

// One residual block on x [b, N^2, d] (or [N^2, d]).
template <typename T>
Var<T> block_forward(const Var<T>& x, const BlockParams<T>& params, const ModelConfig& cfg);

// Class-MLP pooling: x [b, N^2, d] -> class vectors [b, d].
template <typename T>
Var<T> class_mlp_pool(const Var<T>& x, const VisionModel<T>& model);

// Folds every Aff adjacent to a linear map into that map. The result computes
// the same function with fewer elementwise stages.
template <typename T>
VisionModel<T> fuse_affine(const VisionModel<T>& model);

// Runtime stages of one block: each matmul, activation, and each
// non-empty normalisation or branch scale counts as one stage.
template <typename T>
int block_stage_count(const BlockParams<T>& block);

}  // namespace resmlp
