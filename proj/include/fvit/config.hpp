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

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fvit/encoder.hpp"
#include "fvit/harness.hpp"

namespace fvit {

/// key=value run configuration. Files hold one pair per line; '#' starts a
/// comment. Unknown keys and malformed values are rejected with ConfigError.
class RunConfig {
 public:
  RunConfig();

  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  void parse(std::string_view text);
  void load_file(const std::string& path);

  /// Every key in canonical order, "key=value\n" each.
  std::string dump() const;
  static const std::vector<std::string>& keys();

  Task task() const;
  EncoderConfig encoder_config() const;
  TrainOptions train_options() const;
  std::size_t train_count() const;
  std::size_t eval_repeats() const;
  /// Sampled (train_count draws) or one pass over every marker placement.
  ToyDataset train_dataset() const;
  /// Always the enumeration, repeated eval_repeats times.
  ToyDataset eval_dataset() const;
  std::uint64_t seed() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

/// "HxW" -> (H, W).
std::pair<std::size_t, std::size_t> parse_grid(std::string_view text);
std::size_t parse_size(std::string_view key, std::string_view text);
double parse_double(std::string_view key, std::string_view text);
bool parse_bool(std::string_view key, std::string_view text);

}  // namespace fvit
