/*
 * Copyright 2026 The fractal-vit-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fvit/geometry.hpp"

#include <algorithm>
#include <sstream>

#include "fvit/error.hpp"

namespace fvit {

std::size_t max_levels(std::size_t n_h, std::size_t n_w, std::size_t k) {
  if (k < 2) throw ConfigError("summary branching factor k must be at least 2");
  std::size_t levels = 0;
  std::size_t h = n_h / k, w = n_w / k;
  while (h >= 1 && w >= 1) {
    ++levels;
    h /= k;
    w /= k;
  }
  return levels;
}

const char* group_name(TokenGroup group) {
  switch (group) {
    case TokenGroup::regular: return "regular";
    case TokenGroup::summary: return "summary";
    case TokenGroup::global: return "global";
  }
  return "?";
}

TokenLayout::TokenLayout(const GridSpec& grid) : grid_(grid) {
  if (grid.n_h == 0 || grid.n_w == 0)
    throw ConfigError("grid dimensions must be positive, got " + std::to_string(grid.n_h) + "x" +
                      std::to_string(grid.n_w));
  if (grid.k < 2) throw ConfigError("summary branching factor k must be at least 2, got " + std::to_string(grid.k));

  std::size_t h = grid.n_h, w = grid.n_w;
  for (std::size_t m = 0; m <= grid.levels; ++m) {
    if (h == 0 || w == 0)
      throw ConfigError("summary level " + std::to_string(m) + " of a " + std::to_string(grid.n_h) + "x" +
                        std::to_string(grid.n_w) + " grid with k=" + std::to_string(grid.k) +
                        " has an empty grid (at most " +
                        std::to_string(max_levels(grid.n_h, grid.n_w, grid.k)) + " levels)");
    rows_.push_back(h);
    cols_.push_back(w);
    h /= grid.k;
    w /= grid.k;
  }

  std::size_t offset = 0;
  for (std::size_t m = 0; m < rows_.size(); ++m) {
    offsets_.push_back(offset);
    for (std::size_t i = 0; i < rows_[m]; ++i)
      for (std::size_t j = 0; j < cols_[m]; ++j)
        tokens_.push_back(TokenInfo{m == 0 ? TokenGroup::regular : TokenGroup::summary, m, {i, j}, {}});
    offset += rows_[m] * cols_[m];
  }
  tokens_.push_back(TokenInfo{TokenGroup::global, 0, {0, 0}, {}});

  children_.assign(tokens_.size(), {});
  for (std::size_t idx = 0; idx + 1 < tokens_.size(); ++idx) {
    auto& t = tokens_[idx];
    t.parent = parent_of(t.level, t.pos);
    if (t.parent) children_[*t.parent].push_back(idx);
  }
}

std::size_t TokenLayout::index_of(std::size_t level, GridPos pos) const {
  if (level >= rows_.size())
    throw ContractError("level " + std::to_string(level) + " outside layout with " +
                        std::to_string(grid_.levels) + " summary levels");
  if (pos.row >= rows_[level] || pos.col >= cols_[level])
    throw ContractError("position (" + std::to_string(pos.row) + "," + std::to_string(pos.col) +
                        ") outside the " + std::to_string(rows_[level]) + "x" + std::to_string(cols_[level]) +
                        " grid of level " + std::to_string(level));
  return offsets_[level] + pos.row * cols_[level] + pos.col;
}

std::optional<std::size_t> TokenLayout::parent_of(std::size_t level, GridPos pos) const {
  index_of(level, pos);  // validates
  const std::size_t up = level + 1;
  if (up >= rows_.size()) return std::nullopt;
  std::size_t r = pos.row / grid_.k, c = pos.col / grid_.k;
  if (r >= rows_[up] || c >= cols_[up]) {
    if (!grid_.clamp_orphans) return std::nullopt;
    r = std::min(r, rows_[up] - 1);
    c = std::min(c, cols_[up] - 1);
  }
  return offsets_[up] + r * cols_[up] + c;
}

std::string TokenLayout::dump() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    out << i << ' ' << group_name(t.group) << ' ';
    if (t.group == TokenGroup::global)
      out << "- - -";
    else
      out << t.level << ' ' << t.pos.row << ' ' << t.pos.col;
    out << ' ';
    if (t.parent)
      out << *t.parent;
    else
      out << '-';
    out << '\n';
  }
  return out.str();
}

TokenLayout build_layout(const GridSpec& grid) { return TokenLayout(grid); }

}  // namespace fvit
