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

#include "fvit/encoder.hpp"

#include <cmath>

#include "fvit/error.hpp"
#include "fvit/rng.hpp"

namespace fvit {

MaskKind parse_mask_kind(std::string_view name) {
  if (name == "full") return MaskKind::full;
  if (name == "fractal") return MaskKind::fractal;
  throw ConfigError("unknown mask kind '" + std::string(name) + "' (expected full, fractal)");
}

const char* mask_kind_name(MaskKind kind) { return kind == MaskKind::full ? "full" : "fractal"; }

void EncoderConfig::validate() const {
  if (patch_size == 0) throw ConfigError("patch size must be positive");
  if (d < 2) throw ConfigError("embedding dimension must be at least 2");
  if (n_heads == 0 || d % n_heads != 0)
    throw ConfigError("embedding dimension " + std::to_string(d) + " is not divisible by " +
                      std::to_string(n_heads) + " heads");
  if (n_layers == 0) throw ConfigError("encoder needs at least one layer");
  if (mlp_ratio == 0) throw ConfigError("mlp ratio must be positive");
  if (n_classes < 2) throw ConfigError("classifier needs at least two classes");
  const bool uses_sincos = posenc.scheme == PeScheme::sincos2d ||
                           (posenc.policy == TokenPolicy::summary &&
                            posenc.effective_summary_scheme() == PeScheme::sincos2d);
  if (uses_sincos && d % 4 != 0)
    throw ConfigError("sincos2d needs an embedding dimension divisible by 4, got " + std::to_string(d));
  if (grid.levels > 0 && posenc.policy == TokenPolicy::summary && posenc.effective_summary_scheme() == PeScheme::none)
    throw ConfigError("summary tokens without positional encoding are indistinguishable; use policy=none");
  if (mask == MaskKind::fractal && posenc.policy == TokenPolicy::registers)
    throw ConfigError("registers are unmasked; use mask=full with policy=register");
  if (!(init_std >= 0.0)) throw ConfigError("init std must be non-negative");
}

EncoderConfig EncoderConfig::tiny() { return EncoderConfig{}; }

Tensor extract_patches(ImageView image, std::size_t n_h, std::size_t n_w, std::size_t p) {
  const std::size_t width = n_w * p;
  if (image.size() != n_h * p * width * 3)
    throw ConfigError("image has " + std::to_string(image.size()) + " values, expected " +
                      std::to_string(n_h * p) + "x" + std::to_string(width) + "x3");
  const std::size_t len = 3 * p * p;
  Tensor out({n_h * n_w, len});
  for (std::size_t i = 0; i < n_h; ++i)
    for (std::size_t j = 0; j < n_w; ++j) {
      double* row = &out.data()[(i * n_w + j) * len];
      std::size_t c = 0;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) row[c++] = image[((i * p + y) * width + j * p + x) * 3 + ch];
    }
  return out;
}

Var attention_block(Var x, const LayerVars& layer, const AttentionMask& mask, const AlibiBias* bias,
                    std::size_t n_heads, std::optional<std::size_t> query_row,
                    std::vector<Tensor>* attention_out) {
  const std::size_t n = x.value().rows();
  const std::size_t d = x.value().cols();
  if (mask.size() != n)
    throw DimensionError("attention_block: mask covers " + std::to_string(mask.size()) + " tokens, input has " +
                         std::to_string(n));
  if (bias && (bias->n != n || bias->heads.size() != n_heads))
    throw DimensionError("attention_block: bias does not match tokens and heads");
  if (n_heads == 0 || d % n_heads != 0) throw DimensionError("attention_block: heads do not divide width");
  if (query_row && *query_row >= n) throw ContractError("attention_block: query row outside input");

  const std::size_t dh = d / n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Var h = layer_norm(x, layer.ln1_gain, layer.ln1_shift);
  Var q_src = query_row ? slice_rows(h, *query_row, 1) : h;
  Var q = linear(q_src, layer.wq, layer.bq);
  Var k = linear(h, layer.wk, layer.bk);
  Var v = linear(h, layer.wv, layer.bv);

  auto allowed = mask.bits();
  if (query_row) allowed = allowed.subspan(*query_row * n, n);
  if (attention_out) attention_out->clear();

  std::vector<Var> heads;
  heads.reserve(n_heads);
  for (std::size_t hd = 0; hd < n_heads; ++hd) {
    Var qh = n_heads == 1 ? q : slice_cols(q, hd * dh, dh);
    Var kh = n_heads == 1 ? k : slice_cols(k, hd * dh, dh);
    Var vh = n_heads == 1 ? v : slice_cols(v, hd * dh, dh);
    Var logits = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    std::span<const double> head_bias;
    if (bias) {
      head_bias = bias->heads[hd];
      if (query_row) head_bias = head_bias.subspan(*query_row * n, n);
    }
    Var weights = masked_softmax(logits, allowed, head_bias);
    if (attention_out) attention_out->push_back(weights.value());
    heads.push_back(matmul(weights, vh));
  }
  Var merged = n_heads == 1 ? heads[0] : concat_cols(heads);
  Var attn = linear(merged, layer.wo, layer.bo);
  Var resid = query_row ? slice_rows(x, *query_row, 1) : x;
  Var y = add(resid, attn);
  Var mlp = linear(gelu(linear(layer_norm(y, layer.ln2_gain, layer.ln2_shift), layer.w1, layer.b1)), layer.w2,
                   layer.b2);
  return add(y, mlp);
}

namespace {

void fill_trunc(Tensor& t, Rng& rng, double std) {
  for (auto& v : t.data()) v = rng.truncated_normal(std);
}

}  // namespace

Encoder::Encoder(EncoderConfig config)
    : config_(std::move(config)), layout_((config_.validate(), build_layout(config_.grid))) {
  mask_ = config_.mask == MaskKind::fractal ? build_fractal_mask(layout_) : build_full_mask(layout_.total());
  const bool alibi_summary =
      config_.posenc.policy == TokenPolicy::summary && config_.posenc.effective_summary_scheme() == PeScheme::alibi2d;
  if (config_.posenc.scheme == PeScheme::alibi2d || alibi_summary) {
    alibi_ = alibi2d_bias(layout_, config_.n_heads, alibi_summary);
    if (config_.posenc.scheme != PeScheme::alibi2d) {
      // Summary-only ALiBi: drop the regular-grid block.
      for (auto& head : alibi_->heads)
        for (std::size_t a = 0; a < layout_.num_regular(); ++a)
          for (std::size_t b = 0; b < layout_.num_regular(); ++b) head[a * alibi_->n + b] = 0.0;
    }
  }

  pos_table_ = assemble_posenc(config_.posenc, layout_, config_.d, derive_seed(config_.seed, 2));
  const std::size_t n = layout_.total(), d = config_.d;
  pos_fixed_ = Tensor({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    if (pos_table_.trainable[r]) {
      learned_rows_.push_back(r);
      continue;
    }
    for (std::size_t c = 0; c < d; ++c) {
      pos_fixed_.at(r, c) = pos_table_.vectors.at(r, c);
      has_fixed_pos_ = has_fixed_pos_ || pos_fixed_.at(r, c) != 0.0;
    }
  }
  if (!learned_rows_.empty()) {
    Tensor learned({learned_rows_.size(), d});
    for (std::size_t i = 0; i < learned_rows_.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) learned.at(i, c) = pos_table_.vectors.at(learned_rows_[i], c);
    params_.pos_learned = std::move(learned);
  }

  Rng rng(derive_seed(config_.seed, 1));
  const double std = config_.init_std;
  const std::size_t patch_len = 3 * config_.patch_size * config_.patch_size;
  const std::size_t hidden = config_.mlp_ratio * d;
  auto& p = params_;
  p.patch_weight = Tensor({d, patch_len});
  fill_trunc(p.patch_weight, rng, std);
  p.patch_bias = Tensor({d});
  for (std::size_t m = 0; m < config_.grid.levels; ++m) p.summary_init.emplace_back(Shape{1, d});
  p.global_token = Tensor({1, d});
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    LayerParams layer;
    layer.ln1_gain = Tensor({d}, 1.0);
    layer.ln1_shift = Tensor({d});
    for (Tensor* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
      *w = Tensor({d, d});
      fill_trunc(*w, rng, std);
    }
    for (Tensor* b : {&layer.bq, &layer.bk, &layer.bv, &layer.bo}) *b = Tensor({d});
    layer.ln2_gain = Tensor({d}, 1.0);
    layer.ln2_shift = Tensor({d});
    layer.w1 = Tensor({hidden, d});
    fill_trunc(layer.w1, rng, std);
    layer.b1 = Tensor({hidden});
    layer.w2 = Tensor({d, hidden});
    fill_trunc(layer.w2, rng, std);
    layer.b2 = Tensor({d});
    p.layers.push_back(std::move(layer));
  }
  p.final_gain = Tensor({d}, 1.0);
  p.final_shift = Tensor({d});
  p.head_weight = Tensor({config_.n_classes, d});
  p.head_bias = Tensor({config_.n_classes});
}

std::vector<NamedTensor> Encoder::parameters() {
  auto& p = params_;
  std::vector<NamedTensor> out;
  out.emplace_back("patch.weight", &p.patch_weight);
  out.emplace_back("patch.bias", &p.patch_bias);
  for (std::size_t m = 0; m < p.summary_init.size(); ++m)
    out.emplace_back("summary." + std::to_string(m + 1) + ".init", &p.summary_init[m]);
  out.emplace_back("global.init", &p.global_token);
  if (p.pos_learned) out.emplace_back("pos.learned", &*p.pos_learned);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layer." + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1.gain", &L.ln1_gain);
    out.emplace_back(pre + "ln1.shift", &L.ln1_shift);
    out.emplace_back(pre + "attn.wq", &L.wq);
    out.emplace_back(pre + "attn.bq", &L.bq);
    out.emplace_back(pre + "attn.wk", &L.wk);
    out.emplace_back(pre + "attn.bk", &L.bk);
    out.emplace_back(pre + "attn.wv", &L.wv);
    out.emplace_back(pre + "attn.bv", &L.bv);
    out.emplace_back(pre + "attn.wo", &L.wo);
    out.emplace_back(pre + "attn.bo", &L.bo);
    out.emplace_back(pre + "ln2.gain", &L.ln2_gain);
    out.emplace_back(pre + "ln2.shift", &L.ln2_shift);
    out.emplace_back(pre + "mlp.w1", &L.w1);
    out.emplace_back(pre + "mlp.b1", &L.b1);
    out.emplace_back(pre + "mlp.w2", &L.w2);
    out.emplace_back(pre + "mlp.b2", &L.b2);
  }
  out.emplace_back("final.gain", &p.final_gain);
  out.emplace_back("final.shift", &p.final_shift);
  out.emplace_back("head.weight", &p.head_weight);
  out.emplace_back("head.bias", &p.head_bias);
  return out;
}

std::size_t Encoder::parameter_count() {
  std::size_t n = 0;
  for (auto& [name, t] : parameters()) n += t->size();
  return n;
}

void Encoder::zero_grad() {
  for (auto& [name, t] : parameters()) t->zero_grad();
}

void Encoder::randomize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : parameters()) {
    const bool is_gain = name.ends_with(".gain");
    const bool is_matrix = t->rank() == 2 && t->rows() > 1 && name != "pos.learned";
    const double fan_in = static_cast<double>(t->cols());
    for (auto& v : t->data()) {
      if (is_gain)
        v = 1.0 + 0.1 * rng.normal();
      else if (is_matrix)
        v = rng.normal() / std::sqrt(fan_in);
      else
        v = 0.2 * rng.normal();
    }
  }
}

Var Encoder::bind(Tape& tape, Tensor& t, bool with_grad) {
  return with_grad ? tape.parameter(t) : tape.constant(t);
}

LayerVars Encoder::bind_layer(Tape& tape, LayerParams& L, bool g) {
  return LayerVars{bind(tape, L.ln1_gain, g), bind(tape, L.ln1_shift, g), bind(tape, L.wq, g),
                   bind(tape, L.bq, g),       bind(tape, L.wk, g),        bind(tape, L.bk, g),
                   bind(tape, L.wv, g),       bind(tape, L.bv, g),        bind(tape, L.wo, g),
                   bind(tape, L.bo, g),       bind(tape, L.ln2_gain, g),  bind(tape, L.ln2_shift, g),
                   bind(tape, L.w1, g),       bind(tape, L.b1, g),        bind(tape, L.w2, g),
                   bind(tape, L.b2, g)};
}

void Encoder::check_image(ImageView image) const {
  if (image.size() != config_.image_size())
    throw ConfigError("image has " + std::to_string(image.size()) + " values, expected " +
                      std::to_string(config_.image_height()) + "x" + std::to_string(config_.image_width()) + "x3");
}

Var Encoder::patch_embed(Tape& tape, ImageView image, bool with_grad) {
  check_image(image);
  Var patches = tape.constant(extract_patches(image, config_.grid.n_h, config_.grid.n_w, config_.patch_size));
  return linear(patches, bind(tape, params_.patch_weight, with_grad), bind(tape, params_.patch_bias, with_grad));
}

Var Encoder::assemble_tokens(Tape& tape, Var regular, bool with_grad) {
  if (regular.value().rows() != layout_.num_regular() || regular.value().cols() != config_.d)
    throw ContractError("assemble_tokens: expected " + std::to_string(layout_.num_regular()) + " regular tokens of width " +
                        std::to_string(config_.d) + ", got " + shape_string(regular.shape()));
  std::vector<Var> parts{regular};
  for (std::size_t m = 1; m < layout_.num_grids(); ++m)
    parts.push_back(repeat_rows(bind(tape, params_.summary_init[m - 1], with_grad), layout_.count(m)));
  parts.push_back(bind(tape, params_.global_token, with_grad));
  Var x = concat_rows(parts);
  if (has_fixed_pos_) x = add(x, tape.constant(pos_fixed_));
  if (params_.pos_learned)
    x = add(x, embed_rows(bind(tape, *params_.pos_learned, with_grad), learned_rows_, layout_.total()));
  return x;
}

Var Encoder::forward(Tape& tape, ImageView image, bool with_grad) {
  Var x = assemble_tokens(tape, patch_embed(tape, image, with_grad), with_grad);
  const AlibiBias* bias = alibi_ ? &*alibi_ : nullptr;
  const std::size_t g = layout_.global_index();
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    const bool last = l + 1 == params_.layers.size();
    LayerVars vars = bind_layer(tape, params_.layers[l], with_grad);
    // Only the global row of the last block reaches the readout.
    x = attention_block(x, vars, mask_, bias, config_.n_heads, last ? std::optional<std::size_t>(g) : std::nullopt);
  }
  Var h = layer_norm(x, bind(tape, params_.final_gain, with_grad), bind(tape, params_.final_shift, with_grad));
  return linear(h, bind(tape, params_.head_weight, with_grad), bind(tape, params_.head_bias, with_grad));
}

Var Encoder::loss(Tape& tape, ImageView image, std::size_t label, bool with_grad) {
  if (label >= config_.n_classes)
    throw ContractError("label " + std::to_string(label) + " outside [0, " + std::to_string(config_.n_classes) + ")");
  return softmax_cross_entropy(forward(tape, image, with_grad), label);
}

std::vector<double> Encoder::logits(ImageView image) {
  Tape tape;
  Var out = forward(tape, image, false);
  return {out.value().data().begin(), out.value().data().end()};
}

double Encoder::loss_value(ImageView image, std::size_t label) {
  Tape tape;
  return loss(tape, image, label, false).value()[0];
}

}  // namespace fvit
