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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fvit/geometry.hpp"

namespace fvit {

/// Dense boolean attention pattern; row = query, column = key.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(std::size_t n, bool fill = false);

  std::size_t size() const { return n_; }
  bool allowed(std::size_t query, std::size_t key) const { return bits_[query * n_ + key] != 0; }
  void set(std::size_t query, std::size_t key, bool value) { bits_[query * n_ + key] = value ? 1 : 0; }
  /// Sets both (a, b) and (b, a).
  void connect(std::size_t a, std::size_t b);

  std::size_t row_sum(std::size_t query) const;
  std::size_t popcount() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::string to_csv() const;
  /// ASCII PGM (P2): 0 blocked, 255 allowed.
  std::string to_pgm() const;

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Full attention within every level, parent <-> child edges between
/// adjacent levels, global <-> everything.
AttentionMask build_fractal_mask(const TokenLayout& layout);

AttentionMask build_full_mask(std::size_t n_total);

struct MaskViolation {
  enum class Kind { size, symmetry, diagonal, global, row_sum };
  Kind kind;
  std::size_t row;
  std::size_t col;
  std::string message;
};

const char* violation_name(MaskViolation::Kind kind);

/// Checks symmetry, the diagonal, the global row/column and the per-row
/// counts the fractal pattern implies. An empty result means valid.
std::vector<MaskViolation> validate_mask(const AttentionMask& mask, const TokenLayout& layout);

}  // namespace fvit
