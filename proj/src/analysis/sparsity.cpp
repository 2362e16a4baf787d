// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "analysis/sparsity.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace resmlp {

namespace {

// Counts below-threshold entries over several matrices sharing one maximum.
double joint_rate(const std::vector<const Tensor<float>*>& mats, double tau) {
  std::size_t total = 0;
  double mx = 0.0;
  for (const auto* m : mats) {
    total += m->size();
    for (float v : m->values()) mx = std::max(mx, std::abs(static_cast<double>(v)));
  }
  if (total == 0) throw ContractError("sparsity_rate: empty matrix");
  const double threshold = tau * mx;
  std::size_t below = 0;
  for (const auto* m : mats) {
    for (float v : m->values()) below += std::abs(static_cast<double>(v)) < threshold ? 1 : 0;
  }
  return static_cast<double>(below) / static_cast<double>(total);
}

}  // namespace

double sparsity_rate(const Tensor<float>& m, double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ContractError("sparsity_rate: tau must be finite and non-negative");
  if (m.rank() != 2) throw ContractError("sparsity_rate: expected a matrix, got " + shape_string(m.shape()));
  return joint_rate({&m}, tau);
}

SparsityReport sparsity_report(const VisionModel<float>& model, double tau) {
  SparsityReport r;
  r.model_id = model_id(model.config);
  r.tau = tau;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const auto& b = model.blocks[i];
    LayerSparsity s;
    s.layer = static_cast<int>(i);
    if (!b.has_mix) {
      s.rate_a = std::numeric_limits<double>::quiet_NaN();
    } else if (b.mix2_weight) {
      s.rate_a = joint_rate({&b.mix_weight, &*b.mix2_weight}, tau);
    } else {
      s.rate_a = sparsity_rate(b.mix_weight, tau);
    }
    s.rate_b = sparsity_rate(b.fc1_weight, tau);
    s.rate_c = sparsity_rate(b.fc2_weight, tau);
    r.layers.push_back(s);
  }
  return r;
}

void write_sparsity_csv(std::ostream& out, const SparsityReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%g", report.tau);
  out << "# model: " << report.model_id << "\n";
  out << "# threshold: |w| < " << buf << " * max|w|, strict\n";
  out << "# denominator: all entries of the matrix, diagonal included\n";
  out << "layer,rate_A,rate_B,rate_C\n";
  for (const auto& l : report.layers) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f\n", l.layer, l.rate_a, l.rate_b, l.rate_c);
    out << buf;
  }
}

void write_sparsity_csv(const std::string& path, const SparsityReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_sparsity_csv(out, report);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace resmlp
