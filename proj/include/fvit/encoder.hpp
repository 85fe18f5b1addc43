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
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fvit/geometry.hpp"
#include "fvit/mask.hpp"
#include "fvit/posenc.hpp"
#include "fvit/tensor.hpp"

namespace fvit {

enum class MaskKind { full, fractal };

MaskKind parse_mask_kind(std::string_view name);
const char* mask_kind_name(MaskKind kind);

struct EncoderConfig {
  GridSpec grid{4, 4, 2, 1, false};
  std::size_t patch_size = 4;
  std::size_t d = 32;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t mlp_ratio = 4;
  std::size_t n_classes = 16;
  PosEncSpec posenc;
  MaskKind mask = MaskKind::fractal;
  std::uint64_t seed = 0;
  double init_std = 0.02;

  std::size_t image_height() const { return grid.n_h * patch_size; }
  std::size_t image_width() const { return grid.n_w * patch_size; }
  std::size_t image_size() const { return image_height() * image_width() * 3; }
  std::size_t head_dim() const { return d / n_heads; }

  /// Throws ConfigError on inconsistent settings.
  void validate() const;

  /// 4x4 grid, patch 4, d=32, 2 heads, 2 layers, k=2, one summary level,
  /// fractal mask, sincos2d.
  static EncoderConfig tiny();
};

struct LayerParams {
  Tensor ln1_gain, ln1_shift;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_shift;
  Tensor w1, b1, w2, b2;
};

struct EncoderParams {
  Tensor patch_weight;  // [d x 3 p^2]
  Tensor patch_bias;    // [d]
  /// One [1 x d] start vector per summary level, shared by that level's tokens.
  std::vector<Tensor> summary_init;
  Tensor global_token;  // [1 x d]
  /// Trainable rows of the position table, in canonical order of the rows
  /// they feed.
  std::optional<Tensor> pos_learned;
  std::vector<LayerParams> layers;
  Tensor final_gain, final_shift;
  Tensor head_weight;   // [n_classes x d]
  Tensor head_bias;     // [n_classes]
};

using NamedTensor = std::pair<std::string, Tensor*>;

/// Image layout: H x W x 3, row-major, channel fastest.
using ImageView = std::span<const double>;

/// [n_h*n_w x 3p^2] matrix of flattened patches, row-major over the grid,
/// each patch flattened row, column, channel.
Tensor extract_patches(ImageView image, std::size_t n_h, std::size_t n_w, std::size_t patch_size);

/// Parameters bound to a tape for one forward pass.
struct LayerVars {
  Var ln1_gain, ln1_shift, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_shift, w1, b1, w2, b2;
};

/// Pre-norm transformer block. With `query_row`, only that token's output
/// row is computed (keys and values still span every token).
/// `attention_out`, when given, receives each head's attention weights.
Var attention_block(Var x, const LayerVars& layer, const AttentionMask& mask, const AlibiBias* bias,
                    std::size_t n_heads, std::optional<std::size_t> query_row = std::nullopt,
                    std::vector<Tensor>* attention_out = nullptr);

class Encoder {
 public:
  /// Builds layout, mask, position table and deterministic initial
  /// parameters from `config.seed`.
  explicit Encoder(EncoderConfig config);

  const EncoderConfig& config() const { return config_; }
  const TokenLayout& layout() const { return layout_; }
  const AttentionMask& mask() const { return mask_; }
  const std::optional<AlibiBias>& alibi() const { return alibi_; }
  /// Initial position table (trainable rows hold their initial values).
  const PosTable& pos_table() const { return pos_table_; }
  /// Canonical rows fed by `params().pos_learned`.
  const std::vector<std::size_t>& learned_rows() const { return learned_rows_; }

  EncoderParams& params() { return params_; }
  const EncoderParams& params() const { return params_; }

  /// Every trainable tensor with a stable name.
  std::vector<NamedTensor> parameters();
  std::size_t parameter_count();
  void zero_grad();

  /// Redraws every parameter at a scale where all paths carry signal:
  /// matrices N(0, 1/fan_in), gains 1 + N(0, 0.1^2), other vectors N(0, 0.2^2).
  /// Summary start vectors stay shared per level.
  void randomize(std::uint64_t seed);

  Var patch_embed(Tape& tape, ImageView image, bool with_grad);
  /// [n_total x d] token sequence: regular, summary starts, global, plus
  /// position vectors.
  Var assemble_tokens(Tape& tape, Var regular, bool with_grad);
  /// Logits [1 x n_classes] read out from the global token.
  Var forward(Tape& tape, ImageView image, bool with_grad);
  Var loss(Tape& tape, ImageView image, std::size_t label, bool with_grad);

  /// Inference without recording gradients.
  std::vector<double> logits(ImageView image);
  double loss_value(ImageView image, std::size_t label);

 private:
  Var bind(Tape& tape, Tensor& t, bool with_grad);
  LayerVars bind_layer(Tape& tape, LayerParams& layer, bool with_grad);
  void check_image(ImageView image) const;

  EncoderConfig config_;
  TokenLayout layout_;
  AttentionMask mask_;
  std::optional<AlibiBias> alibi_;
  PosTable pos_table_;
  Tensor pos_fixed_;
  bool has_fixed_pos_ = false;
  std::vector<std::size_t> learned_rows_;
  EncoderParams params_;
};

}  // namespace fvit
