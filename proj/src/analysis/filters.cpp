// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "analysis/filters.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace resmlp {

namespace {

constexpr std::uint8_t kSeparator = 64;
constexpr std::uint8_t kFlat = 128;

}  // namespace

PatchSelection PatchSelection::parse(std::string_view text) {
  PatchSelection s;
  if (text == "center6x6" || text == "center") return s;
  if (text == "all") {
    s.mode = Mode::all;
    return s;
  }
  s.mode = Mode::explicit_list;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    int v = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || end != item.data() + item.size()) {
      throw ConfigError("bad patch selection '" + std::string(item) + "': expected center6x6, all or indices");
    }
    s.indices.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (s.indices.empty()) throw ConfigError("empty patch selection");
  return s;
}

FilterGrid filter_grid(const VisionModel<float>& model, int layer, const PatchSelection& selection) {
  const int depth = static_cast<int>(model.blocks.size());
  if (layer < 0 || layer >= depth) {
    throw ContractError("filter export: layer " + std::to_string(layer) + " outside [0, " + std::to_string(depth) + ")");
  }
  const auto& block = model.blocks[static_cast<std::size_t>(layer)];
  if (!block.has_mix || block.mix2_weight) {
    throw ContractError("filter export needs a linear cross-patch layer");
  }
  const int n = model.config.grid();
  const int tokens = n * n;
  FilterGrid g;
  g.layer = layer;
  g.grid = n;
  switch (selection.mode) {
    case PatchSelection::Mode::center: {
      const int k = std::min(6, n);
      const int start = (n - k) / 2;
      for (int i = start; i < start + k; ++i) {
        for (int j = start; j < start + k; ++j) g.patches.push_back(i * n + j);
      }
      break;
    }
    case PatchSelection::Mode::all:
      for (int i = 0; i < tokens; ++i) g.patches.push_back(i);
      break;
    case PatchSelection::Mode::explicit_list:
      g.patches = selection.indices;
      break;
  }
  if (g.patches.empty()) throw ContractError("filter export: empty selection");
  for (int p : g.patches) {
    if (p < 0 || p >= tokens) {
      throw ContractError("filter export: patch " + std::to_string(p) + " outside [0, " + std::to_string(tokens) + ")");
    }
  }
  const float* a = block.mix_weight.data();
  for (int p : g.patches) {
    const float* row = a + static_cast<std::ptrdiff_t>(p) * tokens;
    const auto [lo, hi] = std::minmax_element(row, row + tokens);
    std::vector<std::uint8_t> tile(static_cast<std::size_t>(tokens), kFlat);
    if (*hi > *lo) {
      const double span = static_cast<double>(*hi) - static_cast<double>(*lo);
      for (int i = 0; i < tokens; ++i) {
        const double t = (static_cast<double>(row[i]) - *lo) / span;
        tile[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(t * 255.0));
      }
    }
    g.tiles.push_back(std::move(tile));
  }
  return g;
}

std::string encode_pgm(const FilterGrid& grid, const std::string& model_id) {
  const int count = static_cast<int>(grid.tiles.size());
  const int n = grid.grid;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  const int rows = (count + cols - 1) / cols;
  const int width = cols * (n + 1) + 1;
  const int height = rows * (n + 1) + 1;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), kSeparator);
  for (int k = 0; k < count; ++k) {
    const int y0 = (k / cols) * (n + 1) + 1;
    const int x0 = (k % cols) * (n + 1) + 1;
    const auto& tile = grid.tiles[static_cast<std::size_t>(k)];
    for (int i = 0; i < n; ++i) {
      std::copy_n(tile.begin() + i * n, n, pixels.begin() + (y0 + i) * width + x0);
    }
  }
  std::string out = "P5\n# model=" + model_id + " layer=" + std::to_string(grid.layer) +
                    " tiles=" + std::to_string(count) + " normalization=per-tile-minmax\n" +
                    std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(pixels.begin(), pixels.end());
  return out;
}

void export_filter_grid(const VisionModel<float>& model, int layer, const PatchSelection& selection,
                        const std::string& path) {
  const auto bytes = encode_pgm(filter_grid(model, layer, selection), model_id(model.config));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace resmlp
