// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seq2seq/vocab.hpp"
#include "vision/model.hpp"

namespace resmlp {

struct Seq2SeqConfig {
  int vocab_size = 32;
  int dim = 64;
  int hidden = 256;
  int encoder_depth = 2;
  int decoder_depth = 2;
  int heads = 4;
  int max_len = 24;  // longest supported sequence, bos/eos included
  Activation activation = Activation::gelu;
  PreNorm pre_norm = PreNorm::layernorm;
  double layerscale_init = 0.2;
  bool positional_embedding = true;

  void validate() const;
  bool operator==(const Seq2SeqConfig&) const = default;
};

template <typename T>
struct EncoderLayerParams {
  Norm<T> norm1;
  Tensor<T> mix_weight;  // [L_cap, L_cap]
  Tensor<T> mix_bias;    // [L_cap]
  BranchScale<T> post1;
  Norm<T> norm2;
  Tensor<T> fc1_weight;
  Tensor<T> fc1_bias;
  Tensor<T> fc2_weight;
  Tensor<T> fc2_bias;
  BranchScale<T> post2;
};

template <typename T>
struct CrossAttentionParams {
  Tensor<T> q_weight, q_bias;
  Tensor<T> k_weight, k_bias;
  Tensor<T> v_weight, v_bias;
  Tensor<T> o_weight, o_bias;
};

template <typename T>
struct DecoderLayerParams {
  Norm<T> norm1;
  Tensor<T> mix_packed;  // lower triangle of A, row-major, L_cap (L_cap + 1) / 2 values
  Tensor<T> mix_bias;    // [L_cap]
  BranchScale<T> post1;
  Norm<T> norm2;
  CrossAttentionParams<T> attn;
  BranchScale<T> post2;
  Norm<T> norm3;
  Tensor<T> fc1_weight;
  Tensor<T> fc1_bias;
  Tensor<T> fc2_weight;
  Tensor<T> fc2_bias;
  BranchScale<T> post3;
};

template <typename T>
struct AttentionResult {
  Var<T> output;   // [B, L_t, d]
  Var<T> weights;  // [B * heads, L_t, L_s]
};

template <typename T>
struct Seq2SeqModel {
  Seq2SeqConfig config;
  Tensor<T> src_embed;  // [V, d]
  Tensor<T> tgt_embed;  // [V, d]
  std::optional<Tensor<T>> src_pos;  // [L_cap, d]
  std::optional<Tensor<T>> tgt_pos;
  std::vector<EncoderLayerParams<T>> encoder;
  Norm<T> encoder_norm;
  std::vector<DecoderLayerParams<T>> decoder;
  Norm<T> decoder_norm;
  Tensor<T> out_weight;  // [V, d]
  Tensor<T> out_bias;

  static Seq2SeqModel init(const Seq2SeqConfig& cfg, std::uint64_t seed);
  static Seq2SeqModel skeleton(const Seq2SeqConfig& cfg);

  void visit(const std::function<void(const std::string&, Tensor<T>&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;
  std::uint64_t parameter_count() const;

  // Source ids -> encoder states [B, L_s, d]. Rows past a sequence's length
  // are not meaningful and are masked downstream.
  Var<T> encode(Tape<T>& tape, const TokenBatch& src) const;

  // Target ids -> summed token and position embeddings [B, L_t, d].
  Var<T> embed_target(Tape<T>& tape, const TokenBatch& tgt_in) const;

  // Decoder on already embedded targets -> logits [B, L_t, V].
  Var<T> decode(const Var<T>& memory, std::span<const int> src_lengths, const Var<T>& tgt_embedded) const;

  // Teacher-forced logits [B, L_t, V].
  Var<T> forward(Tape<T>& tape, const TokenBatch& src, const TokenBatch& tgt_in) const;

  template <typename U>
  Seq2SeqModel<U> cast() const;
};

// Top-left [L, L] block; CapacityError if L exceeds the matrix.
template <typename T>
Tensor<T> extract_submatrix(const Tensor<T>& a, std::int64_t length);

// Z = X + post(A norm(X) + bias) with A lower-triangular [L, L] and x
// [B, L, d] or [L, d]. InvariantError if A has a non-zero above the diagonal.
template <typename T>
Var<T> causal_sublayer(const Var<T>& x, const Var<T>& a, const Var<T>& bias, const Norm<T>& norm,
                       const BranchScale<T>& post);

// Multi-head scaled dot-product attention with queries from `queries`
// [B, L_t, d] and keys/values from `memory` [B, L_s, d]; source positions at
// or beyond src_lengths[b] receive zero weight.
template <typename T>
AttentionResult<T> cross_attention(const Var<T>& queries, const Var<T>& memory, const CrossAttentionParams<T>& p,
                                   int heads, std::span<const int> src_lengths);

}  // namespace resmlp
