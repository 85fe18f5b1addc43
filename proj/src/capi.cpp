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

#include "fvit/fvit.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "fvit/checkpoint.hpp"
#include "fvit/config.hpp"
#include "fvit/encoder.hpp"
#include "fvit/error.hpp"
#include "fvit/geometry.hpp"
#include "fvit/harness.hpp"
#include "fvit/mask.hpp"
#include "fvit/posenc.hpp"

struct fvit_config {
  fvit::RunConfig value;
};
struct fvit_layout {
  fvit::TokenLayout value;
};
struct fvit_mask {
  fvit::AttentionMask value;
};
struct fvit_model {
  fvit::Encoder value;
};
struct fvit_report {
  fvit::TrainReport value;
};

namespace {

thread_local std::string g_last_error;

fvit_status fail(fvit_status code, const char* message) {
  g_last_error = message;
  return code;
}

// Runs `body` and translates exceptions into status codes. Order matters:
// subclasses before their bases.
template <class F>
fvit_status guarded(F&& body) {
  try {
    return body();
  } catch (const fvit::ConfigError& e) {
    return fail(FVIT_ERR_CONFIG, e.what());
  } catch (const fvit::ContractError& e) {
    return fail(FVIT_ERR_CONTRACT, e.what());
  } catch (const fvit::IoError& e) {
    return fail(FVIT_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(FVIT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FVIT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FVIT_ERR_INTERNAL, "unknown exception");
  }
}

fvit_status null_argument(const char* what) { return fail(FVIT_ERR_ARGUMENT, what); }

fvit_status copy_text(const std::string& text, char* buf, std::size_t cap, std::size_t* needed) {
  if (needed == nullptr) return null_argument("needed must not be NULL");
  *needed = text.size() + 1;
  if (buf == nullptr || cap < *needed) return fail(FVIT_ERR_BUFFER, "output buffer too small");
  std::memcpy(buf, text.c_str(), text.size() + 1);
  return FVIT_OK;
}

}  // namespace

extern "C" {

const char* fvit_last_error(void) { return g_last_error.c_str(); }

const char* fvit_version(void) { return "0.1.0"; }

fvit_status fvit_config_create(fvit_config** out) {
  if (out == nullptr) return null_argument("out must not be NULL");
  return guarded([&] {
    *out = new fvit_config{};
    return FVIT_OK;
  });
}

void fvit_config_destroy(fvit_config* config) { delete config; }

fvit_status fvit_config_set(fvit_config* config, const char* key, const char* value) {
  if (config == nullptr || key == nullptr || value == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    config->value.set(key, value);
    return FVIT_OK;
  });
}

fvit_status fvit_config_load(fvit_config* config, const char* path) {
  if (config == nullptr || path == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    config->value.load_file(path);
    return FVIT_OK;
  });
}

fvit_status fvit_config_get(const fvit_config* config, const char* key, char* buf, size_t cap, size_t* needed) {
  if (config == nullptr || key == nullptr) return null_argument("NULL argument");
  return guarded([&] { return copy_text(config->value.get(key), buf, cap, needed); });
}

fvit_status fvit_config_dump(const fvit_config* config, char* buf, size_t cap, size_t* needed) {
  if (config == nullptr) return null_argument("config must not be NULL");
  return guarded([&] { return copy_text(config->value.dump(), buf, cap, needed); });
}

fvit_status fvit_max_levels(size_t n_h, size_t n_w, size_t k, size_t* out) {
  if (out == nullptr) return null_argument("out must not be NULL");
  return guarded([&] {
    *out = fvit::max_levels(n_h, n_w, k);
    return FVIT_OK;
  });
}

fvit_status fvit_layout_create(size_t n_h, size_t n_w, size_t k, size_t levels, int clamp_orphans,
                               fvit_layout** out) {
  if (out == nullptr) return null_argument("out must not be NULL");
  return guarded([&] {
    *out = new fvit_layout{fvit::TokenLayout(fvit::GridSpec{n_h, n_w, k, levels, clamp_orphans != 0})};
    return FVIT_OK;
  });
}

void fvit_layout_destroy(fvit_layout* layout) { delete layout; }

fvit_status fvit_layout_counts(const fvit_layout* layout, size_t* regular, size_t* summary, size_t* total) {
  if (layout == nullptr) return null_argument("layout must not be NULL");
  if (regular != nullptr) *regular = layout->value.num_regular();
  if (summary != nullptr) *summary = layout->value.num_summary();
  if (total != nullptr) *total = layout->value.total();
  return FVIT_OK;
}

fvit_status fvit_layout_dump(const fvit_layout* layout, char* buf, size_t cap, size_t* needed) {
  if (layout == nullptr) return null_argument("layout must not be NULL");
  return guarded([&] { return copy_text(layout->value.dump(), buf, cap, needed); });
}

fvit_status fvit_mask_fractal(const fvit_layout* layout, fvit_mask** out) {
  if (layout == nullptr || out == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    *out = new fvit_mask{fvit::build_fractal_mask(layout->value)};
    return FVIT_OK;
  });
}

fvit_status fvit_mask_full(size_t n_total, fvit_mask** out) {
  if (out == nullptr) return null_argument("out must not be NULL");
  return guarded([&] {
    *out = new fvit_mask{fvit::build_full_mask(n_total)};
    return FVIT_OK;
  });
}

void fvit_mask_destroy(fvit_mask* mask) { delete mask; }

fvit_status fvit_mask_size(const fvit_mask* mask, size_t* n) {
  if (mask == nullptr || n == nullptr) return null_argument("NULL argument");
  *n = mask->value.size();
  return FVIT_OK;
}

fvit_status fvit_mask_get(const fvit_mask* mask, size_t row, size_t col, int* allowed) {
  if (mask == nullptr || allowed == nullptr) return null_argument("NULL argument");
  if (row >= mask->value.size() || col >= mask->value.size()) return fail(FVIT_ERR_CONTRACT, "mask index out of range");
  *allowed = mask->value.allowed(row, col) ? 1 : 0;
  return FVIT_OK;
}

fvit_status fvit_mask_popcount(const fvit_mask* mask, size_t* out) {
  if (mask == nullptr || out == nullptr) return null_argument("NULL argument");
  *out = mask->value.popcount();
  return FVIT_OK;
}

fvit_status fvit_mask_validate(const fvit_mask* mask, const fvit_layout* layout, size_t* violations) {
  if (mask == nullptr || layout == nullptr || violations == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    *violations = fvit::validate_mask(mask->value, layout->value).size();
    return FVIT_OK;
  });
}

fvit_status fvit_mask_write(const fvit_mask* mask, const char* path, fvit_mask_format format) {
  if (mask == nullptr || path == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    if (format != FVIT_MASK_CSV && format != FVIT_MASK_PGM) return fail(FVIT_ERR_CONFIG, "unknown mask format");
    fvit::write_text_file(path, format == FVIT_MASK_CSV ? mask->value.to_csv() : mask->value.to_pgm());
    return FVIT_OK;
  });
}

fvit_status fvit_posenc_table_csv(const char* scheme, size_t h, size_t w, size_t d, double tau, uint64_t seed,
                                  char* buf, size_t cap, size_t* needed) {
  if (scheme == nullptr) return null_argument("scheme must not be NULL");
  return guarded([&] {
    const fvit::PeScheme s = fvit::parse_scheme(scheme);
    fvit::Tensor table;
    if (s == fvit::PeScheme::sincos2d) table = fvit::sincos2d(h, w, d, tau);
    else if (s == fvit::PeScheme::learned) table = fvit::init_learned(h * w, d, seed).vectors;
    else throw fvit::ConfigError("position table export supports sincos2d and learned only");
    return copy_text(fvit::grid_table_csv(table, w), buf, cap, needed);
  });
}

fvit_status fvit_alibi_slopes(size_t n_heads, double* out, size_t cap) {
  if (out == nullptr) return null_argument("out must not be NULL");
  return guarded([&] {
    const auto slopes = fvit::alibi_slopes(n_heads);
    if (cap < slopes.size()) return fail(FVIT_ERR_BUFFER, "output buffer too small");
    std::copy(slopes.begin(), slopes.end(), out);
    return FVIT_OK;
  });
}

fvit_status fvit_alibi2d_csv(const fvit_layout* layout, size_t n_heads, char* buf, size_t cap, size_t* needed) {
  if (layout == nullptr) return null_argument("layout must not be NULL");
  return guarded([&] { return copy_text(fvit::alibi2d_bias(layout->value, n_heads).to_csv(), buf, cap, needed); });
}

fvit_status fvit_model_create(const fvit_config* config, fvit_model** out) {
  if (config == nullptr || out == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    *out = new fvit_model{fvit::Encoder(config->value.encoder_config())};
    return FVIT_OK;
  });
}

void fvit_model_destroy(fvit_model* model) { delete model; }

fvit_status fvit_model_info(const fvit_model* model, size_t* n_params, size_t* n_classes, size_t* image_size) {
  if (model == nullptr) return null_argument("model must not be NULL");
  // parameters() hands out mutable views; counting does not modify.
  auto& m = const_cast<fvit::Encoder&>(model->value);
  if (n_params != nullptr) *n_params = m.parameter_count();
  if (n_classes != nullptr) *n_classes = m.config().n_classes;
  if (image_size != nullptr) *image_size = m.config().image_size();
  return FVIT_OK;
}

fvit_status fvit_model_randomize(fvit_model* model, uint64_t seed) {
  if (model == nullptr) return null_argument("model must not be NULL");
  return guarded([&] {
    model->value.randomize(seed);
    return FVIT_OK;
  });
}

fvit_status fvit_model_forward(fvit_model* model, const double* image, size_t image_len, double* logits,
                               size_t logits_cap) {
  if (model == nullptr || image == nullptr || logits == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    const auto out = model->value.logits(fvit::ImageView(image, image_len));
    if (logits_cap < out.size()) return fail(FVIT_ERR_BUFFER, "logits buffer too small");
    std::copy(out.begin(), out.end(), logits);
    return FVIT_OK;
  });
}

fvit_status fvit_model_save(fvit_model* model, const char* path) {
  if (model == nullptr || path == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    fvit::save_checkpoint(path, model->value);
    return FVIT_OK;
  });
}

fvit_status fvit_model_load(fvit_model* model, const char* path) {
  if (model == nullptr || path == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    fvit::load_checkpoint(path, model->value);
    return FVIT_OK;
  });
}

fvit_status fvit_model_evaluate(fvit_model* model, const fvit_config* config, double* accuracy) {
  if (model == nullptr || config == nullptr || accuracy == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    *accuracy = fvit::evaluate(model->value, config->value.eval_dataset());
    return FVIT_OK;
  });
}

fvit_status fvit_train(fvit_model* model, const fvit_config* config, fvit_report** out) {
  if (model == nullptr || config == nullptr || out == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    const auto& rc = config->value;
    auto report = fvit::train(model->value, rc.train_dataset(), rc.eval_dataset(), rc.train_options(), rc.dump());
    *out = new fvit_report{std::move(report)};
    return FVIT_OK;
  });
}

void fvit_report_destroy(fvit_report* report) { delete report; }

fvit_status fvit_report_summary(const fvit_report* report, double* initial_accuracy, double* final_accuracy,
                                size_t* epochs, int* diverged) {
  if (report == nullptr) return null_argument("report must not be NULL");
  const auto& r = report->value;
  if (initial_accuracy != nullptr) *initial_accuracy = r.initial_eval_accuracy;
  if (final_accuracy != nullptr) *final_accuracy = r.final_eval_accuracy;
  if (epochs != nullptr) *epochs = r.epochs.size();
  if (diverged != nullptr) *diverged = r.diverged ? 1 : 0;
  return FVIT_OK;
}

fvit_status fvit_report_text(const fvit_report* report, char* buf, size_t cap, size_t* needed) {
  if (report == nullptr) return null_argument("report must not be NULL");
  return guarded([&] { return copy_text(report->value.to_text(), buf, cap, needed); });
}

fvit_status fvit_report_csv(const fvit_report* report, char* buf, size_t cap, size_t* needed) {
  if (report == nullptr) return null_argument("report must not be NULL");
  return guarded([&] { return copy_text(report->value.to_csv(), buf, cap, needed); });
}

fvit_status fvit_gradcheck(fvit_model* model, const fvit_config* config, size_t batch_size, double eps,
                           fvit_gradcheck_result* out) {
  if (model == nullptr || config == nullptr || out == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    if (batch_size == 0) throw fvit::ConfigError("gradcheck batch must hold at least one sample");
    if (!(eps > 0.0)) throw fvit::ConfigError("gradcheck eps must be positive");
    auto batch = config->value.train_dataset();
    if (batch.samples.size() > batch_size) batch.samples.resize(batch_size);
    const auto r = fvit::gradcheck(model->value, batch, eps);
    *out = fvit_gradcheck_result{};
    out->max_rel_error = r.max_rel_error;
    out->worst_analytic = r.worst_analytic;
    out->worst_numeric = r.worst_numeric;
    out->worst_index = r.worst_index;
    out->checked = r.checked;
    const std::size_t n = std::min(r.worst_parameter.size(), sizeof(out->worst_parameter) - 1);
    std::memcpy(out->worst_parameter, r.worst_parameter.data(), n);
    return FVIT_OK;
  });
}

fvit_status fvit_permtest(fvit_model* model, const char* kind, size_t trials, uint64_t seed, double* max_deviation) {
  if (model == nullptr || kind == nullptr || max_deviation == nullptr) return null_argument("NULL argument");
  return guarded([&] {
    *max_deviation = fvit::permutation_test(model->value, fvit::parse_perm_kind(kind), trials, seed);
    return FVIT_OK;
  });
}

}  // extern "C"
