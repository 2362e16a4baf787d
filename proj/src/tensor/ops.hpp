// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "tensor/tape.hpp"

namespace resmlp {

enum class Activation { gelu, relu, silu, hardswish };
enum class ReduceKind { mean, sum, max };

Activation parse_activation(std::string_view name);
const char* to_string(Activation kind) noexcept;

// Scalar reference forms, also used by the elementwise kernels.
double activation_value(Activation kind, double x);
double activation_derivative(Activation kind, double x);

// All ops record onto the tape of their first operand. Optional operands are
// passed as a default-constructed Var.

// [..., k] x [k, n] -> [..., n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

// Swaps the last two axes.
template <typename T>
Var<T> transpose(const Var<T>& a);

// x [..., in], weight [out, in], bias [out] -> x weight^T + bias
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias = {});

// Mixes along the token axis: mixer [M, L], x [B, L, d] (or [L, d]),
// bias [M] or [M, d]. Output row m of batch b is sum_l mixer[m, l] x[b, l, :] + bias[m].
template <typename T>
Var<T> token_mix(const Var<T>& mixer, const Var<T>& x, const Var<T>& bias = {});

// Batched matmul: a [B, m, k], b [B, k, n] (or [B, n, k] when transpose_b).
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b);

template <typename T>
Var<T> activation(const Var<T>& x, Activation kind);

// Elementwise with b either the same shape as a or a trailing-suffix shape
// broadcast over a's leading axes.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

// out[..., c] = alpha[c] * x[..., c] + beta[c]; either vector may be omitted.
template <typename T>
Var<T> scale_shift(const Var<T>& x, const Var<T>& alpha, const Var<T>& beta);

// Reduction along one axis; the max reduction routes its gradient to the
// first maximal element.
template <typename T>
Var<T> reduce(const Var<T>& x, int axis, ReduceKind kind, bool keepdim = false);

template <typename T>
Var<T> sum_all(const Var<T>& x);

// Per-row index of the maximum, lowest index on ties.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& x);

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-6));

// Mean over rows of -sum_k q_k log softmax(logits)_k, with q the one-hot label
// smoothed towards uniform. Optional per-row weights turn the mean into a
// weighted mean (weight 0 masks a row).
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels, T smoothing = T(0),
                     std::span<const T> row_weights = {});

// Softmax over the last axis of x viewed as [B, M, L]; positions >= lengths[b]
// get probability zero. B == lengths.size().
template <typename T>
Var<T> masked_softmax(const Var<T>& x, std::span<const int> lengths);

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<int>& axes);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

// table [V, d] gathered at ids -> prefix_shape + [d].
template <typename T>
Var<T> embedding(const Var<T>& table, std::span<const int> ids, const Shape& prefix_shape);

template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b, int axis);

template <typename T>
Var<T> slice(const Var<T>& x, int axis, std::int64_t start, std::int64_t length);

// Packed lower triangle (row-major, n(n+1)/2 values) -> dense [L, L] for L <= n.
// Entries above the diagonal are structural zeros and carry no gradient.
template <typename T>
Var<T> tril_expand(const Var<T>& packed, std::int64_t length);

// Zeroes rows t >= lengths[b] of x [B, L, d].
template <typename T>
Var<T> mask_rows(const Var<T>& x, std::span<const int> lengths);

template <typename T>
Var<T> detach(const Var<T>& x);

}  // namespace resmlp
