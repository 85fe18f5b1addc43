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

#include "fvit/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <locale>
#include <sstream>

#include "fvit/error.hpp"
#include "fvit/rng.hpp"

namespace fvit {

namespace {

struct KeySpec {
  const char* key;
  const char* fallback;
};

// Defaults are the tiny preset.
constexpr KeySpec kKeys[] = {
    {"task", "marked"},        {"grid", "4x4"},          {"patch", "4"},         {"dim", "32"},
    {"heads", "2"},            {"layers", "2"},          {"mlp_ratio", "4"},     {"k", "2"},
    {"levels", "1"},           {"clamp_orphans", "false"}, {"scheme", "sincos2d"}, {"policy", "summary"},
    {"summary_scheme", "same"}, {"mask", "fractal"},     {"tau", "10000"},       {"init_std", "0.02"},
    {"seed", "0"},             {"epochs", "40"},         {"lr", "0.5"},          {"batch", "16"},
    {"train_count", "512"},    {"train_set", "sampled"}, {"eval_repeats", "1"},    {"clip_norm", "1"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::pair<std::size_t, std::size_t> parse_grid(std::string_view text) {
  const auto x = text.find('x');
  if (x == std::string_view::npos) throw ConfigError("grid must look like HxW, got '" + std::string(text) + "'");
  return {parse_size("grid", text.substr(0, x)), parse_size("grid", text.substr(x + 1))};
}

std::size_t parse_size(std::string_view key, std::string_view text) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(text) + "'");
  return v;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string s(text);
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0.0;
  in >> v;
  if (s.empty() || in.fail() || !in.eof() || !std::isfinite(v))
    throw ConfigError(std::string(key) + ": expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_[k.key] = k.fallback;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : kKeys) out.emplace_back(k.key);
    return out;
  }();
  return names;
}

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string k = trim(key), value = trim(raw);
  auto it = values_.find(k);
  if (it == values_.end()) throw ConfigError("unknown config key '" + k + "'");
  // Validate eagerly so errors point at the offending key.
  if (k == "task") parse_task(value);
  else if (k == "grid") parse_grid(value);
  else if (k == "scheme") parse_scheme(value);
  else if (k == "summary_scheme") { if (value != "same") parse_scheme(value); }
  else if (k == "policy") parse_policy(value);
  else if (k == "mask") parse_mask_kind(value);
  else if (k == "clamp_orphans") parse_bool(k, value);
  else if (k == "train_set") { if (value != "sampled" && value != "enumerated") throw ConfigError("train_set must be sampled or enumerated, got '" + value + "'"); }
  else if (k == "tau" || k == "init_std" || k == "lr" || k == "clip_norm") parse_double(k, value);
  else parse_size(k, value);
  it->second = value;
}

std::string RunConfig::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

void RunConfig::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + trim(line) + "'");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  parse(buf.str());
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& k : kKeys) out += std::string(k.key) + "=" + values_.at(k.key) + "\n";
  return out;
}

Task RunConfig::task() const { return parse_task(get("task")); }

std::uint64_t RunConfig::seed() const { return parse_size("seed", get("seed")); }

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig c;
  const auto [h, w] = parse_grid(get("grid"));
  c.grid.n_h = h;
  c.grid.n_w = w;
  c.grid.k = parse_size("k", get("k"));
  c.grid.levels = parse_size("levels", get("levels"));
  c.grid.clamp_orphans = parse_bool("clamp_orphans", get("clamp_orphans"));
  c.patch_size = parse_size("patch", get("patch"));
  c.d = parse_size("dim", get("dim"));
  c.n_heads = parse_size("heads", get("heads"));
  c.n_layers = parse_size("layers", get("layers"));
  c.mlp_ratio = parse_size("mlp_ratio", get("mlp_ratio"));
  c.n_classes = task_classes(task(), c.grid);
  c.posenc.scheme = parse_scheme(get("scheme"));
  c.posenc.policy = parse_policy(get("policy"));
  if (const auto s = get("summary_scheme"); s != "same") c.posenc.summary_scheme = parse_scheme(s);
  c.posenc.tau = parse_double("tau", get("tau"));
  c.mask = parse_mask_kind(get("mask"));
  c.seed = seed();
  c.init_std = parse_double("init_std", get("init_std"));
  c.validate();
  return c;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.epochs = parse_size("epochs", get("epochs"));
  o.lr = parse_double("lr", get("lr"));
  o.batch = parse_size("batch", get("batch"));
  o.clip_norm = parse_double("clip_norm", get("clip_norm"));
  o.seed = seed();
  return o;
}

std::size_t RunConfig::train_count() const { return parse_size("train_count", get("train_count")); }
std::size_t RunConfig::eval_repeats() const { return parse_size("eval_repeats", get("eval_repeats")); }

ToyDataset RunConfig::train_dataset() const {
  const EncoderConfig c = encoder_config();
  if (get("train_set") == "enumerated") return enumerate(task(), c.grid, c.patch_size);
  return generate(task(), c.grid, c.patch_size, train_count(), derive_seed(seed(), 4));
}

ToyDataset RunConfig::eval_dataset() const {
  const EncoderConfig c = encoder_config();
  return enumerate(task(), c.grid, c.patch_size, eval_repeats());
}

}  // namespace fvit
