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

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace fvit {

/// Patch grid plus the k-summary hierarchy built on top of it.
struct GridSpec {
  std::size_t n_h = 0;
  std::size_t n_w = 0;
  std::size_t k = 2;
  std::size_t levels = 0;
  /// Tokens outside the covered region join the nearest block instead of
  /// staying parentless.
  bool clamp_orphans = false;
};

/// Largest L with floor(n_h / k^L) >= 1 and floor(n_w / k^L) >= 1.
std::size_t max_levels(std::size_t n_h, std::size_t n_w, std::size_t k);

enum class TokenGroup { regular, summary, global };

const char* group_name(TokenGroup group);

struct GridPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct TokenInfo {
  TokenGroup group = TokenGroup::regular;
  /// 0 for regular tokens, m for level-m summaries.
  std::size_t level = 0;
  GridPos pos;
  std::optional<std::size_t> parent;
};

/// Canonical token order: regular tokens row-major, then each summary level
/// row-major from level 1 upward, then the single global token.
class TokenLayout {
 public:
  explicit TokenLayout(const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  /// Number of grids including the regular one (levels + 1).
  std::size_t num_grids() const { return rows_.size(); }
  std::size_t rows(std::size_t level) const { return rows_.at(level); }
  std::size_t cols(std::size_t level) const { return cols_.at(level); }
  std::size_t count(std::size_t level) const { return rows(level) * cols(level); }
  /// First canonical index of a level (level 0 = regular tokens).
  std::size_t offset(std::size_t level) const { return offsets_.at(level); }

  std::size_t num_regular() const { return count(0); }
  std::size_t num_summary() const { return total() - num_regular() - 1; }
  std::size_t total() const { return tokens_.size(); }
  std::size_t global_index() const { return total() - 1; }

  const TokenInfo& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<TokenInfo>& tokens() const { return tokens_; }
  /// Children of a summary token (empty for regular and global tokens).
  const std::vector<std::size_t>& children(std::size_t index) const { return children_.at(index); }

  /// Canonical index of the token at `pos` on grid `level`; throws
  /// ContractError when out of range.
  std::size_t index_of(std::size_t level, GridPos pos) const;

  /// Parent of the level-m token at `pos`, or nullopt for orphans and the
  /// top level.
  std::optional<std::size_t> parent_of(std::size_t level, GridPos pos) const;

  /// One line per token: index, group, level, row, col, parent ("-" when
  /// absent). Global token prints "-" for level and position.
  std::string dump() const;

 private:
  GridSpec grid_;
  std::vector<std::size_t> rows_, cols_, offsets_;
  std::vector<TokenInfo> tokens_;
  std::vector<std::vector<std::size_t>> children_;
};

/// Validates `grid` and builds its layout (throws ConfigError).
TokenLayout build_layout(const GridSpec& grid);

}  // namespace fvit
