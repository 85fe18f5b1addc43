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

// Command-line front end. Talks to the library only through the C API.
//
// Exit codes: 0 success, 1 internal error, 2 configuration or usage error,
// 3 a requested --assert-min/--assert-max bound was violated.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fvit/fvit.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAssert = 3;

struct Failure {
  int code;
  std::string message;
};

int exit_code_for(fvit_status s) {
  switch (s) {
    case FVIT_OK: return kExitOk;
    case FVIT_ERR_CONFIG:
    case FVIT_ERR_IO:
    case FVIT_ERR_ARGUMENT: return kExitConfig;
    default: return kExitInternal;
  }
}

void check(fvit_status s) {
  if (s != FVIT_OK) throw Failure{exit_code_for(s), fvit_last_error()};
}

template <class F>
std::string fetch_text(F&& call) {
  size_t needed = 0;
  fvit_status s = call(nullptr, 0, &needed);
  if (s != FVIT_ERR_BUFFER) check(s);
  std::string buf(needed, '\0');
  check(call(buf.data(), buf.size(), &needed));
  buf.resize(needed - 1);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kExitConfig, "cannot open '" + path + "' for writing"};
  out << text;
  if (!out) throw Failure{kExitConfig, "failed writing '" + path + "'"};
}

std::pair<size_t, size_t> parse_grid(const std::string& text) {
  size_t h = 0, w = 0;
  char x = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%zu%c%zu%c", &h, &x, &w, &extra) != 3 || x != 'x')
    throw Failure{kExitConfig, "grid must look like HxW, got '" + text + "'"};
  return {h, w};
}

// RAII holders for the opaque handles.
template <class T, void (*Destroy)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Destroy(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};
using Config = Handle<fvit_config, fvit_config_destroy>;
using Layout = Handle<fvit_layout, fvit_layout_destroy>;
using Mask = Handle<fvit_mask, fvit_mask_destroy>;
using Model = Handle<fvit_model, fvit_model_destroy>;
using Report = Handle<fvit_report, fvit_report_destroy>;

struct GeometryArgs {
  std::string grid = "16x16";
  size_t k = 4;
  std::optional<size_t> levels;
  bool clamp = false;
};

void add_geometry(CLI::App* cmd, GeometryArgs& g) {
  cmd->add_option("--grid", g.grid, "patch grid HxW")->capture_default_str();
  cmd->add_option("--k", g.k, "summary block side")->capture_default_str();
  cmd->add_option("--levels", g.levels, "summary levels (default: as many as fit)");
  cmd->add_flag("--clamp-orphans", g.clamp, "attach edge tokens to the nearest block");
}

void make_layout(const GeometryArgs& g, Layout& layout) {
  const auto [h, w] = parse_grid(g.grid);
  size_t levels = 0;
  if (g.levels) levels = *g.levels;
  else check(fvit_max_levels(h, w, g.k, &levels));
  check(fvit_layout_create(h, w, g.k, levels, g.clamp ? 1 : 0, layout.out()));
}

// Options shared by the commands that build a model from a run config.
struct RunArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_run(CLI::App* cmd, RunArgs& r) {
  cmd->add_option("--config", r.config_path, "key=value config file");
  cmd->add_option("--set", r.sets, "override one key, as key=value (repeatable)");
  cmd->add_option("--seed", r.seed, "seed (default: FVIT_SEED, then the config)");
  cmd->add_option("--out", r.out, "report path (default: stdout)");
}

void make_config(const RunArgs& r, Config& config, const std::vector<std::pair<std::string, std::string>>& extra) {
  check(fvit_config_create(config.out()));
  if (!r.config_path.empty()) check(fvit_config_load(config.get(), r.config_path.c_str()));
  for (const auto& s : r.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Failure{kExitConfig, "--set expects key=value, got '" + s + "'"};
    check(fvit_config_set(config.get(), s.substr(0, eq).c_str(), s.substr(eq + 1).c_str()));
  }
  for (const auto& [k, v] : extra) check(fvit_config_set(config.get(), k.c_str(), v.c_str()));
  if (r.seed) {
    check(fvit_config_set(config.get(), "seed", std::to_string(*r.seed).c_str()));
  } else if (const char* env = std::getenv("FVIT_SEED"); env != nullptr && *env != '\0') {
    check(fvit_config_set(config.get(), "seed", env));
  }
}

std::string config_echo(const Config& config) {
  const std::string dump =
      fetch_text([&](char* b, size_t c, size_t* n) { return fvit_config_dump(config.get(), b, c, n); });
  std::string out;
  size_t start = 0;
  while (start < dump.size()) {
    const size_t end = dump.find('\n', start);
    out += "# " + dump.substr(start, end - start) + "\n";
    start = end + 1;
  }
  return out;
}

uint64_t config_seed(const Config& config) {
  const std::string s =
      fetch_text([&](char* b, size_t c, size_t* n) { return fvit_config_get(config.get(), "seed", b, c, n); });
  return std::stoull(s);
}

struct Bounds {
  std::optional<double> min, max;
};

void add_bounds(CLI::App* cmd, Bounds& b, const char* what) {
  cmd->add_option("--assert-min", b.min, std::string("exit 3 unless ") + what + " >= value");
  cmd->add_option("--assert-max", b.max, std::string("exit 3 unless ") + what + " <= value");
}

int enforce(const Bounds& b, double value, const char* what) {
  if (b.min && !(value >= *b.min)) {
    std::cerr << "assertion failed: " << what << " " << fmt(value) << " < " << fmt(*b.min) << "\n";
    return kExitAssert;
  }
  if (b.max && !(value <= *b.max)) {
    std::cerr << "assertion failed: " << what << " " << fmt(value) << " > " << fmt(*b.max) << "\n";
    return kExitAssert;
  }
  return kExitOk;
}

// Gradcheck and permtest default to redrawn parameters: the fresh init
// zeroes the classifier, which makes most gradients and logit gaps vanish.
void prepare_params(Model& model, const std::string& init, uint64_t seed) {
  if (init == "random") check(fvit_model_randomize(model.get(), seed));
  else if (init != "fresh") throw Failure{kExitConfig, "--init must be random or fresh, got '" + init + "'"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fractal-vit-lab: masks, position tables and toy training for summary-token encoders"};
  app.require_subcommand(1);

  GeometryArgs geo;
  auto* layout_cmd = app.add_subcommand("layout", "print the token layout");
  add_geometry(layout_cmd, geo);
  std::string layout_out;
  layout_cmd->add_option("--out", layout_out, "output path (default: stdout)");

  auto* mask_cmd = app.add_subcommand("mask", "write the fractal attention mask");
  add_geometry(mask_cmd, geo);
  std::string mask_out, mask_format = "csv", mask_kind = "fractal";
  mask_cmd->add_option("--out", mask_out, "output path")->required();
  mask_cmd->add_option("--format", mask_format, "csv or pgm")->check(CLI::IsMember({"csv", "pgm"}))->capture_default_str();
  mask_cmd->add_option("--kind", mask_kind, "fractal or full")->check(CLI::IsMember({"fractal", "full"}))->capture_default_str();

  auto* pe_cmd = app.add_subcommand("posenc", "export position tables and ALiBi biases");
  std::string pe_scheme = "sincos2d", pe_out;
  size_t pe_dim = 32, pe_heads = 8;
  double pe_tau = 10000.0;
  std::uint64_t pe_seed = 0;
  pe_cmd->add_option("--scheme", pe_scheme, "sincos2d, learned, alibi-slopes or alibi2d")
      ->check(CLI::IsMember({"sincos2d", "learned", "alibi-slopes", "alibi2d"}))
      ->capture_default_str();
  pe_cmd->add_option("--grid", geo.grid, "patch grid HxW")->capture_default_str();
  pe_cmd->add_option("--k", geo.k, "summary block side (alibi2d)")->capture_default_str();
  pe_cmd->add_option("--levels", geo.levels, "summary levels (alibi2d)");
  pe_cmd->add_option("--dim", pe_dim, "vector width")->capture_default_str();
  pe_cmd->add_option("--tau", pe_tau, "sinusoid temperature")->capture_default_str();
  pe_cmd->add_option("--heads", pe_heads, "attention heads (ALiBi)")->capture_default_str();
  pe_cmd->add_option("--seed", pe_seed, "seed for learned tables")->capture_default_str();
  pe_cmd->add_option("--out", pe_out, "output path (default: stdout)");

  RunArgs run;
  auto* train_cmd = app.add_subcommand("train", "train on a toy task and report accuracy");
  add_run(train_cmd, run);
  std::string task, csv_out, checkpoint_out;
  std::optional<double> lr;
  std::optional<size_t> epochs;
  Bounds train_bounds;
  train_cmd->add_option("--task", task, "marked or pair")->check(CLI::IsMember({"marked", "pair"}));
  train_cmd->add_option("--lr", lr, "peak step size");
  train_cmd->add_option("--epochs", epochs, "passes over the training set");
  train_cmd->add_option("--csv", csv_out, "per-epoch CSV path");
  train_cmd->add_option("--checkpoint", checkpoint_out, "save trained parameters here");
  add_bounds(train_cmd, train_bounds, "final eval accuracy");

  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_run(grad_cmd, run);
  double eps = 1e-5;
  size_t grad_batch = 2;
  std::string init = "random";
  Bounds grad_bounds;
  grad_cmd->add_option("--eps", eps, "central-difference step")->capture_default_str();
  grad_cmd->add_option("--batch", grad_batch, "training samples in the checked loss")->capture_default_str();
  grad_cmd->add_option("--init", init, "random or fresh parameters")->capture_default_str();
  add_bounds(grad_cmd, grad_bounds, "max relative error");

  auto* perm_cmd = app.add_subcommand("permtest", "measure logit change under patch permutations");
  add_run(perm_cmd, run);
  std::string perm_kind = "within-block";
  size_t trials = 10;
  Bounds perm_bounds;
  perm_cmd->add_option("--kind", perm_kind, "any, within-block, block or cross-block")->capture_default_str();
  perm_cmd->add_option("--trials", trials, "random permutations")->capture_default_str();
  perm_cmd->add_option("--init", init, "random or fresh parameters")->capture_default_str();
  add_bounds(perm_cmd, perm_bounds, "max logit deviation");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the enumerated eval set");
  add_run(eval_cmd, run);
  std::string checkpoint_in;
  Bounds eval_bounds;
  eval_cmd->add_option("--checkpoint", checkpoint_in, "parameters to load (default: fresh init)");
  add_bounds(eval_cmd, eval_bounds, "eval accuracy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*layout_cmd) {
      Layout layout;
      make_layout(geo, layout);
      emit(layout_out, fetch_text([&](char* b, size_t c, size_t* n) { return fvit_layout_dump(layout.get(), b, c, n); }));
      return kExitOk;
    }

    if (*mask_cmd) {
      Layout layout;
      make_layout(geo, layout);
      Mask mask;
      if (mask_kind == "fractal") {
        check(fvit_mask_fractal(layout.get(), mask.out()));
      } else {
        size_t total = 0;
        check(fvit_layout_counts(layout.get(), nullptr, nullptr, &total));
        check(fvit_mask_full(total, mask.out()));
      }
      check(fvit_mask_write(mask.get(), mask_out.c_str(), mask_format == "csv" ? FVIT_MASK_CSV : FVIT_MASK_PGM));
      size_t n = 0, ones = 0;
      check(fvit_mask_size(mask.get(), &n));
      check(fvit_mask_popcount(mask.get(), &ones));
      std::cout << "tokens=" << n << " allowed=" << ones << "\n";
      return kExitOk;
    }

    if (*pe_cmd) {
      if (pe_scheme == "alibi-slopes") {
        if (pe_heads == 0) throw Failure{kExitConfig, "--heads must be positive"};
        std::vector<double> slopes(pe_heads);
        check(fvit_alibi_slopes(pe_heads, slopes.data(), slopes.size()));
        std::string text;
        for (size_t h = 0; h < slopes.size(); ++h) text += std::to_string(h) + "," + fmt(slopes[h]) + "\n";
        emit(pe_out, text);
      } else if (pe_scheme == "alibi2d") {
        Layout layout;
        make_layout(geo, layout);
        emit(pe_out, fetch_text([&](char* b, size_t c, size_t* n) { return fvit_alibi2d_csv(layout.get(), pe_heads, b, c, n); }));
      } else {
        const auto [h, w] = parse_grid(geo.grid);
        emit(pe_out, fetch_text([&](char* b, size_t c, size_t* n) {
               return fvit_posenc_table_csv(pe_scheme.c_str(), h, w, pe_dim, pe_tau, pe_seed, b, c, n);
             }));
      }
      return kExitOk;
    }

    std::vector<std::pair<std::string, std::string>> extra;
    if (!task.empty()) extra.emplace_back("task", task);
    if (lr) extra.emplace_back("lr", fmt(*lr));
    if (epochs) extra.emplace_back("epochs", std::to_string(*epochs));
    Config config;
    make_config(run, config, extra);
    Model model;
    check(fvit_model_create(config.get(), model.out()));

    if (*train_cmd) {
      Report report;
      check(fvit_train(model.get(), config.get(), report.out()));
      emit(run.out, fetch_text([&](char* b, size_t c, size_t* n) { return fvit_report_text(report.get(), b, c, n); }));
      if (!csv_out.empty())
        emit(csv_out, fetch_text([&](char* b, size_t c, size_t* n) { return fvit_report_csv(report.get(), b, c, n); }));
      if (!checkpoint_out.empty()) check(fvit_model_save(model.get(), checkpoint_out.c_str()));
      double final_acc = 0.0;
      int diverged = 0;
      check(fvit_report_summary(report.get(), nullptr, &final_acc, nullptr, &diverged));
      if (diverged) std::cerr << "training diverged (non-finite loss)\n";
      return enforce(train_bounds, final_acc, "final eval accuracy");
    }

    if (*grad_cmd) {
      prepare_params(model, init, config_seed(config));
      fvit_gradcheck_result r{};
      check(fvit_gradcheck(model.get(), config.get(), grad_batch, eps, &r));
      std::string text = config_echo(config);
      text += "init=" + init + "\neps=" + fmt(eps) + "\nbatch=" + std::to_string(grad_batch) + "\n";
      text += "checked=" + std::to_string(r.checked) + "\n";
      text += "max_rel_error=" + fmt(r.max_rel_error) + "\n";
      text += "worst_parameter=" + std::string(r.worst_parameter) + "[" + std::to_string(r.worst_index) + "]\n";
      text += "worst_analytic=" + fmt(r.worst_analytic) + "\nworst_numeric=" + fmt(r.worst_numeric) + "\n";
      emit(run.out, text);
      return enforce(grad_bounds, r.max_rel_error, "max relative error");
    }

    if (*perm_cmd) {
      const uint64_t seed = config_seed(config);
      prepare_params(model, init, seed);
      double deviation = 0.0;
      check(fvit_permtest(model.get(), perm_kind.c_str(), trials, seed, &deviation));
      std::string text = config_echo(config);
      text += "init=" + init + "\nkind=" + perm_kind + "\ntrials=" + std::to_string(trials) + "\n";
      text += "max_deviation=" + fmt(deviation) + "\n";
      emit(run.out, text);
      return enforce(perm_bounds, deviation, "max logit deviation");
    }

    if (*eval_cmd) {
      if (!checkpoint_in.empty()) check(fvit_model_load(model.get(), checkpoint_in.c_str()));
      double acc = 0.0;
      check(fvit_model_evaluate(model.get(), config.get(), &acc));
      std::string text = config_echo(config);
      text += "checkpoint=" + (checkpoint_in.empty() ? std::string("-") : checkpoint_in) + "\n";
      text += "eval_accuracy=" + fmt(acc) + "\n";
      emit(run.out, text);
      return enforce(eval_bounds, acc, "eval accuracy");
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
