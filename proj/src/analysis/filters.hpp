// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vision/model.hpp"

namespace resmlp {

// Which rows of A to draw. `center` picks the central k x k patches of the
// N x N grid (k = min(6, N)); `all` draws every row; `explicit_list` uses
// `indices` as given.
struct PatchSelection {
  enum class Mode { center, all, explicit_list };
  Mode mode = Mode::center;
  std::vector<int> indices;

  // "center6x6", "all", or a comma-separated index list such as "0,5,17".
  static PatchSelection parse(std::string_view text);
};

struct FilterGrid {
  int layer = 0;
  int grid = 0;  // N
  std::vector<int> patches;
  std::vector<std::vector<std::uint8_t>> tiles;  // N*N bytes each, row-major
};

// Per-tile min-max to [0, 255]; a constant tile is 128 everywhere.
FilterGrid filter_grid(const VisionModel<float>& model, int layer, const PatchSelection& selection);

// Tiles laid out ceil(sqrt(n)) per row with 1-pixel separators and border of
// value 64, as binary PGM with one comment line of metadata.
std::string encode_pgm(const FilterGrid& grid, const std::string& model_id);

void export_filter_grid(const VisionModel<float>& model, int layer, const PatchSelection& selection,
                        const std::string& path);

}  // namespace resmlp
