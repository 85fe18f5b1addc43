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

// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Thresholds here are the contract; do not
// loosen them to make a run pass.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fvit/checkpoint.hpp"
#include "fvit/config.hpp"
#include "fvit/harness.hpp"
#include "fvit/mask.hpp"
#include "fvit/posenc.hpp"
#include "reference_mask.hpp"

namespace fs = std::filesystem;
using namespace fvit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
    pass = pass && ok;
  }
};

// ---------------------------------------------------------------------------

Outcome mask_oracle() {
  Outcome o;
  const auto start = Clock::now();
  for (const std::size_t side : {8, 16}) {
    const TokenLayout layout = build_layout(GridSpec{side, side, 4, 1, false});
    const AttentionMask mask = build_fractal_mask(layout);
    const auto ref = testing::reference_summary_mask(side, side, side / 4);
    bool equal = mask.size() == ref.n;
    for (std::size_t q = 0; equal && q < ref.n; ++q)
      for (std::size_t k = 0; k < ref.n; ++k)
        if (mask.allowed(q, k) != (ref.at(q, k) != 0)) {
          equal = false;
          break;
        }
    o.require(equal, std::to_string(side) + "x" + std::to_string(side) + " bit-identical (" +
                         std::to_string(mask.size()) + " tokens)");
  }
  const double t = seconds_since(start);
  o.require(t < 1.0, "runtime " + fmt("%.3f", t) + " s < 1 s");
  return o;
}

Outcome token_counts() {
  Outcome o;
  const std::size_t expected[] = {59, 17, 9, 4};
  for (std::size_t k = 2; k <= 5; ++k) {
    const std::size_t levels = max_levels(14, 14, k);
    const TokenLayout layout = build_layout(GridSpec{14, 14, k, levels, false});
    const std::size_t got = layout.num_summary();
    o.require(got == expected[k - 2], "k=" + std::to_string(k) + " -> " + std::to_string(got));
  }
  return o;
}

Outcome posenc_algebra() {
  Outcome o;
  double worst_pair = 0.0;
  bool norm_exact = true;
  double worst_norm = 0.0;
  struct Case {
    std::size_t h, w, d;
  };
  for (const Case c : {Case{4, 4, 32}, Case{14, 14, 64}, Case{32, 32, 128}, Case{7, 9, 8}}) {
    const Tensor t = sincos2d(c.h, c.w, c.d);
    for (std::size_t r = 0; r < t.rows(); ++r) {
      double norm2 = 0.0;
      for (std::size_t i = 0; i < c.d; i += 2) {
        const double s = t.at(r, i), co = t.at(r, i + 1);
        worst_pair = std::max(worst_pair, std::abs(s * s + co * co - 1.0));
        norm2 += s * s + co * co;
      }
      const double half = static_cast<double>(c.d) / 2.0;
      norm_exact = norm_exact && norm2 == half;
      worst_norm = std::max(worst_norm, std::abs(norm2 - half));
    }
  }
  o.require(worst_pair <= 1e-12, "max |sin^2+cos^2-1| = " + fmt("%.3g", worst_pair));
  o.require(norm_exact, "squared norm == d/2 exactly (max deviation " + fmt("%.3g", worst_norm) + ")");

  double worst_ratio = 0.0;
  for (std::size_t n = 1; n <= 16; ++n) {
    const auto slopes = alibi_slopes(n);
    const double ratio = std::exp2(-8.0 / static_cast<double>(n));
    worst_ratio = std::max(worst_ratio, std::abs(slopes[0] - ratio));
    for (std::size_t h = 1; h < n; ++h) worst_ratio = std::max(worst_ratio, std::abs(slopes[h] / slopes[h - 1] - ratio));
  }
  o.require(worst_ratio <= 1e-12, "slope ratio deviation " + fmt("%.3g", worst_ratio));

  bool symmetric = true, zero_diag = true, nonpositive = true;
  for (const GridSpec g : {GridSpec{14, 14, 2, 3, false}, GridSpec{8, 8, 4, 1, false}, GridSpec{5, 7, 2, 2, true}}) {
    const AlibiBias b = alibi2d_bias(build_layout(g), 8);
    for (std::size_t h = 0; h < 8; ++h)
      for (std::size_t q = 0; q < b.n; ++q) {
        zero_diag = zero_diag && b.at(h, q, q) == 0.0;
        for (std::size_t k = 0; k < b.n; ++k) {
          symmetric = symmetric && b.at(h, q, k) == b.at(h, k, q);
          nonpositive = nonpositive && b.at(h, q, k) <= 0.0;
        }
      }
  }
  o.require(symmetric, "2D-ALiBi symmetric");
  o.require(zero_diag, "zero diagonal");
  o.require(nonpositive, "non-positive");
  return o;
}

Outcome gradcheck_tiny() {
  Outcome o;
  const EncoderConfig c = EncoderConfig::tiny();
  Encoder model(c);
  model.randomize(1);
  const auto batch = gen_marked_patch(c.grid, c.patch_size, 2, 7);
  const auto start = Clock::now();
  const GradcheckResult r = gradcheck(model, batch, 1e-5);
  const double t = seconds_since(start);
  o.require(r.checked == model.parameter_count(), std::to_string(r.checked) + " entries checked");
  o.require(r.max_rel_error < 1e-4, "max rel error " + fmt("%.3g", r.max_rel_error) + " at " + r.worst_parameter +
                                        "[" + std::to_string(r.worst_index) + "]");
  o.require(t < 60.0, "runtime " + fmt("%.1f", t) + " s < 60 s");
  return o;
}

EncoderConfig nope(MaskKind mask) {
  EncoderConfig c = EncoderConfig::tiny();
  c.posenc.scheme = PeScheme::none;
  c.posenc.policy = TokenPolicy::none;
  c.mask = mask;
  return c;
}

Outcome equivariance() {
  Outcome o;
  constexpr std::size_t kSeeds = 10, kTrials = 5;
  double full_any = 0.0, within = 0.0, block = 0.0, cross_min = INFINITY;
  Encoder full(nope(MaskKind::full)), fractal(nope(MaskKind::fractal));
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    full.randomize(seed);
    fractal.randomize(seed);
    full_any = std::max(full_any, permutation_test(full, PermKind::any, kTrials, seed));
    within = std::max(within, permutation_test(fractal, PermKind::within_block, kTrials, seed));
    block = std::max(block, permutation_test(fractal, PermKind::block, kTrials, seed));
    cross_min = std::min(cross_min, permutation_test(fractal, PermKind::cross_block, 1, seed));
  }
  o.require(full_any < 1e-10, "(a) full/any max dev " + fmt("%.3g", full_any));
  o.require(within < 1e-10, "(b) within-block " + fmt("%.3g", within));
  o.require(block < 1e-10, "(b) block " + fmt("%.3g", block));
  o.require(cross_min > 1e-6, "(c) cross-block min dev over seeds " + fmt("%.3g", cross_min));
  return o;
}

struct Run {
  double accuracy = 0.0;
  double seconds = 0.0;
  bool diverged = false;
};

Run train_recipe(const std::string& cfg_path, const std::vector<std::pair<std::string, std::string>>& sets,
                 Encoder** keep = nullptr) {
  RunConfig cfg;
  cfg.load_file(cfg_path);
  for (const auto& [k, v] : sets) cfg.set(k, v);
  const auto start = Clock::now();
  auto* model = new Encoder(cfg.encoder_config());
  const TrainReport r = train(*model, cfg.train_dataset(), cfg.eval_dataset(), cfg.train_options(), cfg.dump());
  Run run{r.final_eval_accuracy, seconds_since(start), r.diverged};
  if (keep != nullptr) *keep = model;
  else delete model;
  return run;
}

std::string describe(const std::string& name, const Run& r) {
  return name + " acc " + fmt("%.4f", r.accuracy) + " (" + fmt("%.1f", r.seconds) + " s" +
         (r.diverged ? ", diverged" : "") + ")";
}

Outcome marked_patch() {
  Outcome o;
  const std::string cfg = std::string(FVIT_CONFIG_DIR) + "/marked.cfg";
  double total = 0.0;

  const Run sincos = train_recipe(cfg, {{"scheme", "sincos2d"}, {"policy", "summary"}, {"mask", "fractal"}});
  o.require(sincos.accuracy >= 0.90, describe("sincos2d", sincos) + " >= 0.90");
  total += sincos.seconds;

  const Run full = train_recipe(cfg, {{"scheme", "none"}, {"policy", "none"}, {"mask", "full"}});
  o.require(full.accuracy <= 0.125, describe("none+full", full) + " <= 0.125");
  total += full.seconds;

  Encoder* nope_model = nullptr;
  const Run nope_fractal = train_recipe(cfg, {{"scheme", "none"}, {"policy", "none"}, {"mask", "fractal"}}, &nope_model);
  o.require(nope_fractal.accuracy <= 0.125, describe("none+fractal", nope_fractal) + " <= 0.125");
  total += nope_fractal.seconds;
  {
    RunConfig c;
    c.load_file(cfg);
    const ToyDataset eval = c.eval_dataset();
    const auto ref = nope_model->logits(eval.samples.front().image);
    double dev = 0.0;
    for (const auto& s : eval.samples) {
      const auto l = nope_model->logits(s.image);
      for (std::size_t i = 0; i < l.size(); ++i) dev = std::max(dev, std::abs(l[i] - ref[i]));
    }
    o.require(dev <= 1e-10, "none+fractal logits marker-independent (max dev " + fmt("%.3g", dev) + ")");
    delete nope_model;
  }

  const Run summary_only = train_recipe(
      cfg, {{"scheme", "none"}, {"summary_scheme", "sincos2d"}, {"policy", "summary"}, {"mask", "fractal"}});
  o.require(summary_only.accuracy >= 0.20 && summary_only.accuracy <= 0.27,
            describe("summary-only sincos2d", summary_only) + " in [0.20, 0.27]");
  total += summary_only.seconds;
  o.require(total < 600.0, "total " + fmt("%.1f", total) + " s < 600 s");
  return o;
}

Outcome same_block_pair() {
  Outcome o;
  const std::string cfg = std::string(FVIT_CONFIG_DIR) + "/pair.cfg";
  const Run fractal = train_recipe(cfg, {{"scheme", "none"}, {"policy", "none"}, {"mask", "fractal"}});
  o.require(fractal.accuracy >= 0.70, describe("none+fractal", fractal) + " >= 0.70");
  const Run full = train_recipe(cfg, {{"scheme", "none"}, {"policy", "none"}, {"mask", "full"}});
  o.require(full.accuracy <= 0.55, describe("none+full", full) + " <= 0.55");
  o.require(fractal.seconds + full.seconds < 600.0, "total " + fmt("%.1f", fractal.seconds + full.seconds) + " s");
  return o;
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Runs every subcommand twice into separate directories and compares every
// file they wrote.
Outcome determinism() {
  Outcome o;
  const fs::path root = FVIT_WORK_DIR;
  const std::string cli = FVIT_CLI_PATH, cfg = std::string(FVIT_CONFIG_DIR) + "/marked.cfg";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"layout", "layout --grid 14x14 --k 2"},
      {"mask_csv", "mask --grid 8x8 --k 4 --levels 1 --out @/mask.csv"},
      {"mask_pgm", "mask --grid 16x16 --k 4 --format pgm --out @/mask.pgm"},
      {"sincos", "posenc --scheme sincos2d --grid 14x14 --dim 64"},
      {"learned", "posenc --scheme learned --grid 4x4 --dim 8 --seed 5"},
      {"alibi2d", "posenc --scheme alibi2d --grid 4x4 --k 2 --heads 2"},
      {"train", "train --config " + cfg + " --epochs 5 --csv @/train.csv --checkpoint @/model.ckpt"},
      {"eval", "eval --config " + cfg + " --checkpoint @/model.ckpt"},
      {"gradcheck", "gradcheck --set dim=8 --seed 3"},
      {"permtest", "permtest --kind cross-block --trials 3 --seed 4"},
  };
  bool all_ok = true;
  std::vector<std::string> runs[2];
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path dir = root / ("run" + std::to_string(pass));
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& [name, args] : commands) {
      std::string expanded = args;
      for (std::size_t at; (at = expanded.find('@')) != std::string::npos;) expanded.replace(at, 1, dir.string());
      const std::string cmd = "'" + cli + "' " + expanded + " > '" + (dir / (name + ".out")).string() + "' 2>&1";
      const int status = std::system(cmd.c_str());
      if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        all_ok = false;
        o.require(false, name + " exited abnormally");
      }
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) runs[pass].push_back(f.filename().string() + "\n" + slurp(f));
  }
  bool identical = runs[0].size() == runs[1].size();
  for (std::size_t i = 0; identical && i < runs[0].size(); ++i) {
    // The eval echo names its own checkpoint path; compare after the header line.
    std::string a = runs[0][i], b = runs[1][i];
    const auto strip = [](std::string& s, const char* dir) {
      for (std::size_t at; (at = s.find(dir)) != std::string::npos;) s.erase(at, std::string(dir).size());
    };
    strip(a, "run0");
    strip(b, "run1");
    identical = a == b;
  }
  o.require(all_ok && identical, std::to_string(runs[0].size()) + " output files byte-identical across runs");

  // Checkpoint round trip through the library.
  EncoderConfig c = EncoderConfig::tiny();
  Encoder a(c), b(c);
  a.randomize(11);
  const fs::path ckpt = root / "roundtrip.ckpt";
  save_checkpoint(ckpt.string(), a);
  load_checkpoint(ckpt.string(), b);
  const auto sa = snapshot(a), sb = snapshot(b);
  bool params_equal = sa.size() == sb.size();
  for (std::size_t i = 0; params_equal && i < sa.size(); ++i)
    params_equal = sa[i].name == sb[i].name && sa[i].tensor.size() == sb[i].tensor.size() &&
                   std::memcmp(sa[i].tensor.data().data(), sb[i].tensor.data().data(),
                               sa[i].tensor.size() * sizeof(double)) == 0;
  const auto sample = gen_marked_patch(c.grid, c.patch_size, 3, 2);
  bool logits_equal = true;
  for (const auto& s : sample.samples) {
    const auto la = a.logits(s.image), lb = b.logits(s.image);
    logits_equal = logits_equal && la.size() == lb.size() &&
                   std::equal(la.begin(), la.end(), lb.begin(), [](double x, double y) {
                     return std::memcmp(&x, &y, sizeof x) == 0;
                   });
  }
  o.require(params_equal && logits_equal, "checkpoint save/load/forward bitwise");
  o.require(slurp(ckpt) == encode_checkpoint(snapshot(b)), "re-encoded checkpoint identical");
  return o;
}

}  // namespace

int main() {
  fs::create_directories(FVIT_WORK_DIR);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"mask oracle", mask_oracle},
      {"14x14 token counts", token_counts},
      {"positional-encoding algebra", posenc_algebra},
      {"gradcheck", gradcheck_tiny},
      {"equivariance", equivariance},
      {"marked-patch task", marked_patch},
      {"same-block-pair task", same_block_pair},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
