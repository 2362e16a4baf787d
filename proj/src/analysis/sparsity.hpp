// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vision/model.hpp"

namespace resmlp {

// Fraction of entries with |m| < tau * max|m|. An all-zero matrix has rate 0.
double sparsity_rate(const Tensor<float>& m, double tau = 0.05);

struct LayerSparsity {
  int layer = 0;
  double rate_a = 0.0;  // NaN when the block has no cross-patch sublayer
  double rate_b = 0.0;
  double rate_c = 0.0;
};

struct SparsityReport {
  std::string model_id;
  double tau = 0.05;
  std::vector<LayerSparsity> layers;
};

// One entry per block. A token-MLP block reports the rate over both of its
// matrices taken together. Rates count every entry, diagonal included.
SparsityReport sparsity_report(const VisionModel<float>& model, double tau = 0.05);

// `#` metadata lines, then `layer,rate_A,rate_B,rate_C` with %.6f values.
void write_sparsity_csv(std::ostream& out, const SparsityReport& report);
void write_sparsity_csv(const std::string& path, const SparsityReport& report);

}  // namespace resmlp
