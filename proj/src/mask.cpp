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

#include "fvit/mask.hpp"

#include "fvit/error.hpp"

namespace fvit {

AttentionMask::AttentionMask(std::size_t n, bool fill) : n_(n), bits_(n * n, fill ? 1 : 0) {
  if (n == 0) throw ConfigError("attention mask needs at least one token");
}

void AttentionMask::connect(std::size_t a, std::size_t b) {
  set(a, b, true);
  set(b, a, true);
}

std::size_t AttentionMask::row_sum(std::size_t query) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < n_; ++j) s += bits_[query * n_ + j];
  return s;
}

std::size_t AttentionMask::popcount() const {
  std::size_t s = 0;
  for (auto b : bits_) s += b;
  return s;
}

std::string AttentionMask::to_csv() const {
  std::string out;
  out.reserve(n_ * n_ * 2);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if (j) out += ',';
      out += allowed(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

std::string AttentionMask::to_pgm() const {
  std::string out = "P2\n" + std::to_string(n_) + " " + std::to_string(n_) + "\n255\n";
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if (j) out += ' ';
      out += allowed(i, j) ? "255" : "0";
    }
    out += '\n';
  }
  return out;
}

AttentionMask build_fractal_mask(const TokenLayout& layout) {
  AttentionMask mask(layout.total());
  for (std::size_t m = 0; m < layout.num_grids(); ++m) {
    const std::size_t begin = layout.offset(m), end = begin + layout.count(m);
    for (std::size_t a = begin; a < end; ++a)
      for (std::size_t b = begin; b < end; ++b) mask.set(a, b, true);
  }
  for (std::size_t i = 0; i + 1 < layout.total(); ++i)
    if (auto p = layout.token(i).parent) mask.connect(i, *p);
  const std::size_t g = layout.global_index();
  for (std::size_t i = 0; i < layout.total(); ++i) mask.connect(g, i);
  return mask;
}

AttentionMask build_full_mask(std::size_t n_total) { return AttentionMask(n_total, true); }

const char* violation_name(MaskViolation::Kind kind) {
  switch (kind) {
    case MaskViolation::Kind::size: return "size";
    case MaskViolation::Kind::symmetry: return "symmetry";
    case MaskViolation::Kind::diagonal: return "diagonal";
    case MaskViolation::Kind::global: return "global";
    case MaskViolation::Kind::row_sum: return "row_sum";
  }
  return "?";
}

std::vector<MaskViolation> validate_mask(const AttentionMask& mask, const TokenLayout& layout) {
  using Kind = MaskViolation::Kind;
  std::vector<MaskViolation> out;
  const std::size_t n = layout.total();
  if (mask.size() != n) {
    out.push_back({Kind::size, 0, 0,
                   "mask has " + std::to_string(mask.size()) + " tokens, layout has " + std::to_string(n)});
    return out;
  }
  const auto pair = [](std::size_t i, std::size_t j) {
    return "(" + std::to_string(i) + "," + std::to_string(j) + ")";
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (mask.allowed(i, j) != mask.allowed(j, i))
        out.push_back({Kind::symmetry, i, j, "asymmetric pair " + pair(i, j)});
  for (std::size_t i = 0; i < n; ++i)
    if (!mask.allowed(i, i)) out.push_back({Kind::diagonal, i, i, "diagonal cleared at " + std::to_string(i)});
  const std::size_t g = layout.global_index();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.allowed(g, i)) out.push_back({Kind::global, g, i, "global row blocked at " + pair(g, i)});
    if (!mask.allowed(i, g)) out.push_back({Kind::global, i, g, "global column blocked at " + pair(i, g)});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = layout.token(i);
    std::size_t expected = n;
    if (t.group != TokenGroup::global)
      expected = layout.count(t.level) + layout.children(i).size() + (t.parent ? 1 : 0) + 1;
    const std::size_t got = mask.row_sum(i);
    if (got != expected)
      out.push_back({Kind::row_sum, i, 0,
                     "row " + std::to_string(i) + " sums to " + std::to_string(got) + ", expected " +
                         std::to_string(expected)});
  }
  return out;
}

}  // namespace fvit
