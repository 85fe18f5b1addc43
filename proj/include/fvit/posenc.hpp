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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fvit/geometry.hpp"
#include "fvit/tensor.hpp"

namespace fvit {

enum class PeScheme { none, sincos2d, learned, alibi2d };
/// How the additional (non-regular, non-global) tokens get positions.
enum class TokenPolicy { summary, registers, none };

PeScheme parse_scheme(std::string_view name);
TokenPolicy parse_policy(std::string_view name);
const char* scheme_name(PeScheme scheme);
const char* policy_name(TokenPolicy policy);

constexpr double kDefaultTau = 10000.0;
constexpr double kLearnedInitStd = 0.02;

struct PosEncSpec {
  PeScheme scheme = PeScheme::sincos2d;
  TokenPolicy policy = TokenPolicy::summary;
  /// Scheme for summary tokens under TokenPolicy::summary; defaults to
  /// `scheme`. Lets regular tokens stay position-free while summaries carry
  /// positions.
  std::optional<PeScheme> summary_scheme;
  double tau = kDefaultTau;

  PeScheme effective_summary_scheme() const { return summary_scheme.value_or(scheme); }
};

/// Per-token additive position vectors in canonical layout order.
struct PosTable {
  PosEncSpec spec;
  Tensor vectors;                      // [n_total x d]
  std::vector<std::uint8_t> trainable; // per row

  std::size_t rows() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  bool any_trainable() const;
  /// "index,v0,...,v{d-1}" per row, values printed round-trippable.
  std::string to_csv() const;
};

/// Fixed 2D sinusoidal table for an h x w grid, rows in row-major position
/// order. First half of each vector encodes y, second half x, with
/// frequencies tau^(-4i/d) interleaved as (sin, cos) pairs.
Tensor sincos2d(std::size_t h, std::size_t w, std::size_t d, double tau = kDefaultTau);

/// `count` x `d` table of truncated-normal(0.02) entries.
PosTable init_learned(std::size_t count, std::size_t d, std::uint64_t seed);

/// m(h) = 2^(-8(h+1)/n_heads).
std::vector<double> alibi_slopes(std::size_t n_heads);

struct AlibiBias {
  std::vector<double> slopes;
  std::size_t n = 0;
  /// One row-major n x n matrix per head.
  std::vector<std::vector<double>> heads;

  double at(std::size_t head, std::size_t q, std::size_t k) const { return heads[head][q * n + k]; }
  /// "head,query,v0,...,v{n-1}" per row.
  std::string to_csv() const;
};

/// -m(h) * Euclidean distance between same-grid tokens, each level on its
/// own coordinates. Cross-level pairs and pairs touching the global token
/// get 0. With `include_summary` false, only regular pairs get a bias.
AlibiBias alibi2d_bias(const TokenLayout& layout, std::size_t n_heads, bool include_summary = true);

/// Full position table for `layout` following `spec`.
PosTable assemble_posenc(const PosEncSpec& spec, const TokenLayout& layout, std::size_t d,
                         std::uint64_t seed);

std::string format_double(double v);

/// "row,col,v0,...,v{d-1},norm2" per row of a row-major table over a grid
/// of width `w`.
std::string grid_table_csv(const Tensor& table, std::size_t w);

}  // namespace fvit
