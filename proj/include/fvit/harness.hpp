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
#include <string>
#include <string_view>
#include <vector>

#include "fvit/encoder.hpp"
#include "fvit/geometry.hpp"
#include "fvit/rng.hpp"

namespace fvit {

enum class Task { marked_patch, same_block_pair };

Task parse_task(std::string_view name);
const char* task_name(Task task);
std::size_t task_classes(Task task, const GridSpec& grid);

inline constexpr double kBackground = 0.25;
// Marker color per RGB channel. Chosen so a marked patch is not a scalar
// multiple of the background, which layer norm would otherwise erase.
inline constexpr double kMarker[3] = {1.0, 0.0, 0.0};

struct Sample {
  std::vector<double> image;
  std::size_t label = 0;
  std::vector<GridPos> markers;
};

struct ToyDataset {
  Task task = Task::marked_patch;
  std::uint64_t seed = 0;
  std::size_t n_classes = 0;
  std::vector<Sample> samples;
};

/// Background image with the listed patches filled with the marker value.
std::vector<double> render_markers(const GridSpec& grid, std::size_t patch_size, const std::vector<GridPos>& markers);

/// One marked patch per sample, position uniform; label = row-major index.
ToyDataset gen_marked_patch(const GridSpec& grid, std::size_t patch_size, std::size_t count, std::uint64_t seed);
/// Two distinct marked patches; label 1 iff both share a level-1 block.
/// Labels alternate so the two classes differ by at most one sample.
ToyDataset gen_same_block_pair(const GridSpec& grid, std::size_t patch_size, std::size_t count, std::uint64_t seed);

/// Every marker position, `repeats` times each.
ToyDataset enumerate_marked_patch(const GridSpec& grid, std::size_t patch_size, std::size_t repeats = 1);
/// Every unordered same-block and cross-block pair, the smaller class
/// cycled until both classes have equal counts.
ToyDataset enumerate_same_block_pair(const GridSpec& grid, std::size_t patch_size);

ToyDataset generate(Task task, const GridSpec& grid, std::size_t patch_size, std::size_t count, std::uint64_t seed);
ToyDataset enumerate(Task task, const GridSpec& grid, std::size_t patch_size, std::size_t repeats = 1);

/// Logits within this distance of the maximum count as tied.
inline constexpr double kArgmaxTieTolerance = 1e-9;

/// Lowest index whose value ties with the maximum. Rounding noise between
/// symmetric classes therefore cannot flip a prediction.
std::size_t argmax(std::span<const double> values);
double evaluate(Encoder& model, const ToyDataset& data);

struct TrainOptions {
  std::size_t epochs = 30;
  double lr = 0.5;
  std::size_t batch = 16;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double initial_eval_accuracy = 0.0;
  double final_eval_accuracy = 0.0;
  bool diverged = false;
  std::string config_echo;
  std::uint64_t seed = 0;

  /// Resolved config, one "# key=value" line each, then one
  /// "epoch N loss L train_acc A eval_acc B" line per epoch and a summary.
  std::string to_text() const;
  /// "epoch,loss,train_acc,eval_acc" header plus one row per epoch.
  std::string to_csv() const;
};

/// Mini-batch gradient descent with cosine-decayed step size and global
/// gradient-norm clipping. Deterministic for a fixed options.seed. Halts
/// with `diverged` set on a non-finite loss.
TrainReport train(Encoder& model, const ToyDataset& train_set, const ToyDataset& eval_set,
                  const TrainOptions& options, std::string config_echo = {});

enum class PermKind { any, within_block, block, cross_block };

PermKind parse_perm_kind(std::string_view name);
const char* perm_kind_name(PermKind kind);

/// Random relabeling of regular positions: the permuted image takes its
/// patch i from original patch perm[i]. Throws ConfigError when the layout
/// cannot host `kind`.
std::vector<std::size_t> random_patch_permutation(const TokenLayout& layout, PermKind kind, Rng& rng);
std::vector<double> permute_patches(ImageView image, const GridSpec& grid, std::size_t patch_size,
                                    std::span<const std::size_t> perm);

/// Max over trials of max |logits(x) - logits(perm x)| on uniform random
/// images, using the model's current parameters.
double permutation_test(Encoder& model, PermKind kind, std::size_t trials, std::uint64_t seed);

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, kGradcheckFloor). Central differences at eps 1e-5
/// carry about 1e-10 of rounding noise, so the floor keeps gradients that
/// are exactly zero (key biases, for one) from reading as large errors.
inline constexpr double kGradcheckFloor = 1e-5;
double relative_error(double analytic, double numeric);

/// Mean batch loss without recording gradients.
double batch_loss(Encoder& model, const ToyDataset& batch);
/// Accumulates d(mean batch loss)/d(param) into every parameter's grad.
double batch_gradient(Encoder& model, const ToyDataset& batch);

/// Central differences for every entry of every parameter against the
/// analytic gradient of the mean batch loss.
GradcheckResult gradcheck(Encoder& model, const ToyDataset& batch, double eps);

}  // namespace fvit
