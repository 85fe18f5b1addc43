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

#include "fvit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fvit/error.hpp"
#include "fvit/posenc.hpp"

namespace fvit {

Task parse_task(std::string_view name) {
  if (name == "marked" || name == "marked-patch") return Task::marked_patch;
  if (name == "pair" || name == "same-block-pair") return Task::same_block_pair;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected marked, pair)");
}

const char* task_name(Task task) { return task == Task::marked_patch ? "marked" : "pair"; }

std::size_t task_classes(Task task, const GridSpec& grid) {
  return task == Task::marked_patch ? grid.n_h * grid.n_w : 2;
}

std::vector<double> render_markers(const GridSpec& grid, std::size_t p, const std::vector<GridPos>& markers) {
  const std::size_t width = grid.n_w * p;
  std::vector<double> image(grid.n_h * p * width * 3, kBackground);
  for (const auto& m : markers) {
    if (m.row >= grid.n_h || m.col >= grid.n_w) throw ContractError("marker outside the patch grid");
    for (std::size_t y = 0; y < p; ++y)
      for (std::size_t x = 0; x < p; ++x)
        for (std::size_t c = 0; c < 3; ++c) image[((m.row * p + y) * width + m.col * p + x) * 3 + c] = kMarker[c];
  }
  return image;
}

namespace {

GridPos pos_of(const GridSpec& grid, std::size_t index) { return {index / grid.n_w, index % grid.n_w}; }

Sample marked_sample(const GridSpec& grid, std::size_t p, std::size_t index) {
  const GridPos pos = pos_of(grid, index);
  return Sample{render_markers(grid, p, {pos}), index, {pos}};
}

struct PairLists {
  std::vector<std::pair<std::size_t, std::size_t>> same, cross;
};

PairLists block_pairs(const GridSpec& grid) {
  GridSpec one_level = grid;
  one_level.levels = 1;
  const TokenLayout layout(one_level);
  PairLists out;
  const std::size_t n = layout.num_regular();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto pa = layout.token(a).parent, pb = layout.token(b).parent;
      (pa && pa == pb ? out.same : out.cross).emplace_back(a, b);
    }
  if (out.same.empty() || out.cross.empty())
    throw ConfigError("same-block-pair task needs at least two blocks with two tokens each; labels would be constant");
  return out;
}

Sample pair_sample(const GridSpec& grid, std::size_t p, std::pair<std::size_t, std::size_t> pair, std::size_t label) {
  std::vector<GridPos> markers{pos_of(grid, pair.first), pos_of(grid, pair.second)};
  return Sample{render_markers(grid, p, markers), label, markers};
}

}  // namespace

ToyDataset gen_marked_patch(const GridSpec& grid, std::size_t p, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("dataset needs at least one sample");
  ToyDataset ds{Task::marked_patch, seed, grid.n_h * grid.n_w, {}};
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) ds.samples.push_back(marked_sample(grid, p, rng.below(ds.n_classes)));
  return ds;
}

ToyDataset gen_same_block_pair(const GridSpec& grid, std::size_t p, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("dataset needs at least one sample");
  const PairLists pairs = block_pairs(grid);
  ToyDataset ds{Task::same_block_pair, seed, 2, {}};
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % 2 == 0 ? 1 : 0;
    const auto& list = label ? pairs.same : pairs.cross;
    ds.samples.push_back(pair_sample(grid, p, list[rng.below(list.size())], label));
  }
  return ds;
}

ToyDataset enumerate_marked_patch(const GridSpec& grid, std::size_t p, std::size_t repeats) {
  ToyDataset ds{Task::marked_patch, 0, grid.n_h * grid.n_w, {}};
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r)
    for (std::size_t i = 0; i < ds.n_classes; ++i) ds.samples.push_back(marked_sample(grid, p, i));
  return ds;
}

ToyDataset enumerate_same_block_pair(const GridSpec& grid, std::size_t p) {
  const PairLists pairs = block_pairs(grid);
  ToyDataset ds{Task::same_block_pair, 0, 2, {}};
  const std::size_t n = std::max(pairs.same.size(), pairs.cross.size());
  for (std::size_t i = 0; i < n; ++i) {
    ds.samples.push_back(pair_sample(grid, p, pairs.same[i % pairs.same.size()], 1));
    ds.samples.push_back(pair_sample(grid, p, pairs.cross[i % pairs.cross.size()], 0));
  }
  return ds;
}

ToyDataset generate(Task task, const GridSpec& grid, std::size_t p, std::size_t count, std::uint64_t seed) {
  return task == Task::marked_patch ? gen_marked_patch(grid, p, count, seed) : gen_same_block_pair(grid, p, count, seed);
}

ToyDataset enumerate(Task task, const GridSpec& grid, std::size_t p, std::size_t repeats) {
  return task == Task::marked_patch ? enumerate_marked_patch(grid, p, repeats) : enumerate_same_block_pair(grid, p);
}

std::size_t argmax(std::span<const double> values) {
  double top = values[0];
  for (double v : values) top = std::max(top, v);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] >= top - kArgmaxTieTolerance) return i;
  return 0;
}

double evaluate(Encoder& model, const ToyDataset& data) {
  if (data.samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : data.samples) correct += argmax(model.logits(s.image)) == s.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.samples.size());
}

// --------------------------------------------------------------------------
// Training

std::string TrainReport::to_text() const {
  std::ostringstream out;
  std::istringstream cfg(config_echo);
  for (std::string line; std::getline(cfg, line);)
    if (!line.empty()) out << "# " << line << '\n';
  out << "seed " << seed << '\n';
  out << "initial_eval_acc " << format_double(initial_eval_accuracy) << '\n';
  for (const auto& e : epochs)
    out << "epoch " << e.epoch << " loss " << format_double(e.loss) << " train_acc " << format_double(e.train_accuracy)
        << " eval_acc " << format_double(e.eval_accuracy) << '\n';
  out << "final_eval_acc " << format_double(final_eval_accuracy) << '\n';
  out << "diverged " << (diverged ? "true" : "false") << '\n';
  return out.str();
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,loss,train_acc,eval_acc\n";
  for (const auto& e : epochs)
    out += std::to_string(e.epoch) + ',' + format_double(e.loss) + ',' + format_double(e.train_accuracy) + ',' +
           format_double(e.eval_accuracy) + '\n';
  return out;
}

TrainReport train(Encoder& model, const ToyDataset& train_set, const ToyDataset& eval_set,
                  const TrainOptions& options, std::string config_echo) {
  if (train_set.samples.empty()) throw ConfigError("training set is empty");
  if (train_set.n_classes != model.config().n_classes)
    throw ConfigError("dataset has " + std::to_string(train_set.n_classes) + " classes, model has " +
                      std::to_string(model.config().n_classes));
  if (options.batch == 0) throw ConfigError("batch size must be positive");
  if (!(options.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");

  TrainReport report;
  report.config_echo = std::move(config_echo);
  report.seed = options.seed;
  report.initial_eval_accuracy = evaluate(model, eval_set);
  report.final_eval_accuracy = report.initial_eval_accuracy;

  auto params = model.parameters();
  Rng rng(derive_seed(options.seed, 3));
  const std::size_t n = train_set.samples.size();
  const std::size_t steps_per_epoch = (n + options.batch - 1) / options.batch;
  const std::size_t total_steps = steps_per_epoch * options.epochs;
  std::vector<std::size_t> order(n);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < n; begin += options.batch) {
      const std::size_t end = std::min(n, begin + options.batch);
      const double inv_b = 1.0 / static_cast<double>(end - begin);
      model.zero_grad();
      for (std::size_t i = begin; i < end; ++i) {
        const auto& s = train_set.samples[order[i]];
        Tape tape;
        Var logits = model.forward(tape, s.image, true);
        Var loss = softmax_cross_entropy(logits, s.label);
        const double lv = loss.value()[0];
        if (!std::isfinite(lv)) {
          report.diverged = true;
          return report;
        }
        loss_sum += lv;
        correct += argmax(logits.value().data()) == s.label ? 1 : 0;
        tape.backward(scale(loss, inv_b));
      }
      double norm2 = 0.0;
      for (auto& [name, t] : params)
        for (double g : t->grad()) norm2 += g * g;
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) {
        report.diverged = true;
        return report;
      }
      const double clip = norm > options.clip_norm ? options.clip_norm / norm : 1.0;
      const double lr =
          options.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
      for (auto& [name, t] : params) {
        auto g = t->grad();
        auto w = t->data();
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * clip * g[j];
      }
      ++step;
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.loss = loss_sum / static_cast<double>(n);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    stats.eval_accuracy = evaluate(model, eval_set);
    report.epochs.push_back(stats);
    report.final_eval_accuracy = stats.eval_accuracy;
  }
  model.zero_grad();
  return report;
}

// --------------------------------------------------------------------------
// Permutations

PermKind parse_perm_kind(std::string_view name) {
  if (name == "any") return PermKind::any;
  if (name == "within-block") return PermKind::within_block;
  if (name == "block") return PermKind::block;
  if (name == "cross-block" || name == "cross-block-transposition") return PermKind::cross_block;
  throw ConfigError("unknown permutation kind '" + std::string(name) +
                    "' (expected any, within-block, block, cross-block)");
}

const char* perm_kind_name(PermKind kind) {
  switch (kind) {
    case PermKind::any: return "any";
    case PermKind::within_block: return "within-block";
    case PermKind::block: return "block";
    case PermKind::cross_block: return "cross-block";
  }
  return "?";
}

std::vector<std::size_t> random_patch_permutation(const TokenLayout& layout, PermKind kind, Rng& rng) {
  const std::size_t n = layout.num_regular();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  if (kind == PermKind::any) {
    rng.shuffle(perm);
    return perm;
  }
  if (layout.grid().levels == 0)
    throw ConfigError(std::string(perm_kind_name(kind)) + " permutations need at least one summary level");
  const std::size_t first = layout.offset(1), blocks = layout.count(1);
  if (kind == PermKind::within_block) {
    for (std::size_t s = first; s < first + blocks; ++s) {
      std::vector<std::size_t> members = layout.children(s);
      std::vector<std::size_t> shuffled = members;
      rng.shuffle(shuffled);
      for (std::size_t i = 0; i < members.size(); ++i) perm[members[i]] = shuffled[i];
    }
    return perm;
  }
  if (blocks < 2) throw ConfigError(std::string(perm_kind_name(kind)) + " permutations need at least two blocks");
  if (kind == PermKind::block) {
    if (layout.grid().levels != 1)
      throw ConfigError("block permutations are only automorphisms for a single summary level");
    std::vector<std::size_t> targets(blocks);
    for (std::size_t i = 0; i < blocks; ++i) targets[i] = first + i;
    // Blocks only trade places with blocks of the same size.
    std::vector<std::size_t> source = targets;
    rng.shuffle(source);
    std::vector<bool> used(blocks, false);
    std::vector<std::size_t> assigned(blocks);
    for (std::size_t i = 0; i < blocks; ++i) {
      const std::size_t want = layout.children(targets[i]).size();
      for (std::size_t j = 0; j < blocks; ++j)
        if (!used[j] && layout.children(source[j]).size() == want) {
          used[j] = true;
          assigned[i] = source[j];
          break;
        }
    }
    for (std::size_t i = 0; i < blocks; ++i) {
      const auto& dst = layout.children(targets[i]);
      const auto& src = layout.children(assigned[i]);
      for (std::size_t c = 0; c < dst.size(); ++c) perm[dst[c]] = src[c];
    }
    return perm;
  }
  // Cross-block transposition: swap two covered tokens with different parents.
  std::vector<std::size_t> covered;
  for (std::size_t i = 0; i < n; ++i)
    if (layout.token(i).parent) covered.push_back(i);
  const std::size_t a = covered[rng.below(covered.size())];
  std::vector<std::size_t> others;
  for (auto b : covered)
    if (layout.token(b).parent != layout.token(a).parent) others.push_back(b);
  const std::size_t b = others[rng.below(others.size())];
  std::swap(perm[a], perm[b]);
  return perm;
}

std::vector<double> permute_patches(ImageView image, const GridSpec& grid, std::size_t p,
                                    std::span<const std::size_t> perm) {
  const std::size_t width = grid.n_w * p;
  if (image.size() != grid.n_h * p * width * 3) throw ConfigError("image does not match the patch grid");
  if (perm.size() != grid.n_h * grid.n_w) throw ContractError("permutation does not cover every patch");
  std::vector<double> out(image.size());
  for (std::size_t dst = 0; dst < perm.size(); ++dst) {
    const std::size_t src = perm[dst];
    const std::size_t di = dst / grid.n_w, dj = dst % grid.n_w, si = src / grid.n_w, sj = src % grid.n_w;
    for (std::size_t y = 0; y < p; ++y)
      for (std::size_t x = 0; x < p; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          out[((di * p + y) * width + dj * p + x) * 3 + c] = image[((si * p + y) * width + sj * p + x) * 3 + c];
  }
  return out;
}

double permutation_test(Encoder& model, PermKind kind, std::size_t trials, std::uint64_t seed) {
  const auto& cfg = model.config();
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> image(cfg.image_size());
    for (auto& v : image) v = rng.uniform();
    const auto perm = random_patch_permutation(model.layout(), kind, rng);
    const auto a = model.logits(image);
    const auto b = model.logits(permute_patches(image, cfg.grid, cfg.patch_size, perm));
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

// --------------------------------------------------------------------------
// Gradient checking

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

double batch_loss(Encoder& model, const ToyDataset& batch) {
  double total = 0.0;
  for (const auto& s : batch.samples) total += model.loss_value(s.image, s.label);
  return total / static_cast<double>(batch.samples.size());
}

double batch_gradient(Encoder& model, const ToyDataset& batch) {
  if (batch.samples.empty()) throw ContractError("gradient needs a non-empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.samples.size());
  double total = 0.0;
  for (const auto& s : batch.samples) {
    Tape tape;
    Var loss = model.loss(tape, s.image, s.label, true);
    total += loss.value()[0];
    tape.backward(scale(loss, inv_b));
  }
  return total * inv_b;
}

GradcheckResult gradcheck(Encoder& model, const ToyDataset& batch, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
  model.zero_grad();
  batch_gradient(model, batch);
  GradcheckResult result;
  for (auto& [name, t] : model.parameters()) {
    const std::vector<double> analytic(t->grad().begin(), t->grad().end());
    auto w = t->data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + eps;
      const double up = batch_loss(model, batch);
      w[i] = saved - eps;
      const double down = batch_loss(model, batch);
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[i], numeric);
      ++result.checked;
      if (err > result.max_rel_error || result.worst_parameter.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        result.worst_parameter = name;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
  }
  model.zero_grad();
  return result;
}

}  // namespace fvit
