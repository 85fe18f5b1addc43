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

#include "fvit/posenc.hpp"

#include <cmath>
#include <cstdio>

#include "fvit/error.hpp"
#include "fvit/rng.hpp"

namespace fvit {

PeScheme parse_scheme(std::string_view name) {
  if (name == "none") return PeScheme::none;
  if (name == "sincos2d") return PeScheme::sincos2d;
  if (name == "learned") return PeScheme::learned;
  if (name == "alibi2d" || name == "2d-alibi") return PeScheme::alibi2d;
  throw ConfigError("unknown positional encoding scheme '" + std::string(name) +
                    "' (expected none, sincos2d, learned, alibi2d)");
}

TokenPolicy parse_policy(std::string_view name) {
  if (name == "summary") return TokenPolicy::summary;
  if (name == "register" || name == "registers") return TokenPolicy::registers;
  if (name == "none") return TokenPolicy::none;
  throw ConfigError("unknown additional-token policy '" + std::string(name) +
                    "' (expected summary, register, none)");
}

const char* scheme_name(PeScheme scheme) {
  switch (scheme) {
    case PeScheme::none: return "none";
    case PeScheme::sincos2d: return "sincos2d";
    case PeScheme::learned: return "learned";
    case PeScheme::alibi2d: return "alibi2d";
  }
  return "?";
}

const char* policy_name(TokenPolicy policy) {
  switch (policy) {
    case TokenPolicy::summary: return "summary";
    case TokenPolicy::registers: return "register";
    case TokenPolicy::none: return "none";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool PosTable::any_trainable() const {
  for (auto t : trainable)
    if (t) return true;
  return false;
}

std::string PosTable::to_csv() const {
  std::string out;
  for (std::size_t r = 0; r < rows(); ++r) {
    out += std::to_string(r);
    for (std::size_t c = 0; c < dim(); ++c) {
      out += ',';
      out += format_double(vectors.at(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string grid_table_csv(const Tensor& table, std::size_t w) {
  if (w == 0 || table.rows() % w != 0) throw ContractError("table rows do not tile a grid of width " + std::to_string(w));
  std::string out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out += std::to_string(r / w) + ',' + std::to_string(r % w);
    double norm2 = 0.0;
    for (std::size_t c = 0; c < table.cols(); ++c) {
      const double v = table.at(r, c);
      norm2 += v * v;
      out += ',';
      out += format_double(v);
    }
    out += ',';
    out += format_double(norm2);
    out += '\n';
  }
  return out;
}

Tensor sincos2d(std::size_t h, std::size_t w, std::size_t d, double tau) {
  if (d == 0 || d % 4 != 0)
    throw ConfigError("sincos2d needs an embedding dimension divisible by 4, got " + std::to_string(d));
  if (h == 0 || w == 0) throw ConfigError("sincos2d needs a non-empty grid");
  if (!(tau > 0.0)) throw ConfigError("sincos2d temperature must be positive");
  Tensor out({h * w, d});
  const std::size_t quarter = d / 4, half = d / 2;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t r = y * w + x;
      for (std::size_t i = 0; i < quarter; ++i) {
        const double omega = std::pow(tau, -4.0 * static_cast<double>(i) / static_cast<double>(d));
        const double fy = static_cast<double>(y) * omega;
        const double fx = static_cast<double>(x) * omega;
        out.at(r, 2 * i) = std::sin(fy);
        out.at(r, 2 * i + 1) = std::cos(fy);
        out.at(r, 2 * i + half) = std::sin(fx);
        out.at(r, 2 * i + half + 1) = std::cos(fx);
      }
    }
  return out;
}

PosTable init_learned(std::size_t count, std::size_t d, std::uint64_t seed) {
  if (count == 0 || d == 0) throw ConfigError("learned position table needs positive count and dimension");
  PosTable table;
  table.spec.scheme = PeScheme::learned;
  table.vectors = Tensor({count, d});
  Rng rng(seed);
  for (auto& v : table.vectors.data()) v = rng.truncated_normal(kLearnedInitStd);
  table.trainable.assign(count, 1);
  return table;
}

std::vector<double> alibi_slopes(std::size_t n_heads) {
  if (n_heads == 0) throw ConfigError("ALiBi needs at least one head");
  std::vector<double> slopes(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h)
    slopes[h] = std::exp2(-8.0 * static_cast<double>(h + 1) / static_cast<double>(n_heads));
  return slopes;
}

std::string AlibiBias::to_csv() const {
  std::string out;
  for (std::size_t h = 0; h < heads.size(); ++h)
    for (std::size_t q = 0; q < n; ++q) {
      out += std::to_string(h) + ',' + std::to_string(q);
      for (std::size_t k = 0; k < n; ++k) {
        out += ',';
        out += format_double(at(h, q, k));
      }
      out += '\n';
    }
  return out;
}

AlibiBias alibi2d_bias(const TokenLayout& layout, std::size_t n_heads, bool include_summary) {
  AlibiBias bias;
  bias.slopes = alibi_slopes(n_heads);
  bias.n = layout.total();
  const std::size_t n = bias.n;
  std::vector<double> dist(n * n, 0.0);
  const std::size_t grids = include_summary ? layout.num_grids() : 1;
  for (std::size_t m = 0; m < grids; ++m) {
    const std::size_t begin = layout.offset(m), end = begin + layout.count(m);
    for (std::size_t a = begin; a < end; ++a)
      for (std::size_t b = begin; b < end; ++b) {
        const auto pa = layout.token(a).pos, pb = layout.token(b).pos;
        const double dr = static_cast<double>(pa.row) - static_cast<double>(pb.row);
        const double dc = static_cast<double>(pa.col) - static_cast<double>(pb.col);
        dist[a * n + b] = std::sqrt(dr * dr + dc * dc);
      }
  }
  bias.heads.resize(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    bias.heads[h].resize(n * n);
    for (std::size_t i = 0; i < n * n; ++i) bias.heads[h][i] = dist[i] == 0.0 ? 0.0 : -bias.slopes[h] * dist[i];
  }
  return bias;
}

PosTable assemble_posenc(const PosEncSpec& spec, const TokenLayout& layout, std::size_t d, std::uint64_t seed) {
  const PeScheme summary_scheme = spec.effective_summary_scheme();
  if (layout.num_summary() > 0 && spec.policy == TokenPolicy::summary && summary_scheme == PeScheme::none)
    throw ConfigError("summary tokens without positional encoding are indistinguishable; use policy=none");
  if ((spec.scheme == PeScheme::sincos2d || summary_scheme == PeScheme::sincos2d) && d % 4 != 0)
    throw ConfigError("sincos2d needs an embedding dimension divisible by 4, got " + std::to_string(d));

  const std::size_t n = layout.total();
  // One learned draw for the whole layout so that every policy that ends up
  // learning a row starts from the same value.
  const PosTable learned = init_learned(n, d, seed);

  PosTable table;
  table.spec = spec;
  table.vectors = Tensor({n, d});
  table.trainable.assign(n, 0);

  const auto copy_learned = [&](std::size_t row) {
    for (std::size_t c = 0; c < d; ++c) table.vectors.at(row, c) = learned.vectors.at(row, c);
    table.trainable[row] = 1;
  };
  const auto fill_grid = [&](PeScheme scheme, std::size_t level) {
    const std::size_t begin = layout.offset(level), count = layout.count(level);
    if (scheme == PeScheme::sincos2d) {
      const Tensor grid = sincos2d(layout.rows(level), layout.cols(level), d, spec.tau);
      for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < d; ++c) table.vectors.at(begin + r, c) = grid.at(r, c);
    } else if (scheme == PeScheme::learned) {
      for (std::size_t r = 0; r < count; ++r) copy_learned(begin + r);
    }
  };

  fill_grid(spec.scheme, 0);
  for (std::size_t m = 1; m < layout.num_grids(); ++m) {
    switch (spec.policy) {
      case TokenPolicy::summary: fill_grid(summary_scheme, m); break;
      case TokenPolicy::registers:
        for (std::size_t r = 0; r < layout.count(m); ++r) copy_learned(layout.offset(m) + r);
        break;
      case TokenPolicy::none: break;
    }
  }
  // Under the register policy the global token is one of the registers.
  if (spec.scheme == PeScheme::learned || spec.policy == TokenPolicy::registers) copy_learned(layout.global_index());
  return table;
}

}  // namespace fvit
