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

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "fvit/checkpoint.hpp"
#include "fvit/config.hpp"
#include "fvit/error.hpp"

using namespace fvit;

TEST_CASE("run config parsing") {
  RunConfig rc;
  rc.parse("# comment line\n task = pair \n\ngrid=8x4  # trailing\nscheme=none\npolicy=none\n");
  CHECK(rc.get("task") == "pair");
  CHECK(rc.get("grid") == "8x4");
  CHECK(rc.task() == Task::same_block_pair);
  const auto c = rc.encoder_config();
  CHECK(c.grid.n_h == 8);
  CHECK(c.grid.n_w == 4);
  CHECK(c.n_classes == 2);
  CHECK(c.posenc.scheme == PeScheme::none);

  CHECK_THROWS_AS(rc.set("colour", "red"), ConfigError);
  CHECK_THROWS_AS(rc.set("grid", "8by4"), ConfigError);
  CHECK_THROWS_AS(rc.set("dim", "-3"), ConfigError);
  CHECK_THROWS_AS(rc.set("lr", "fast"), ConfigError);
  CHECK_THROWS_AS(rc.set("train_set", "all"), ConfigError);
  CHECK_THROWS_AS(rc.parse("no equals sign"), ConfigError);
  CHECK_THROWS_AS(rc.load_file("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("defaults are the tiny preset") {
  const RunConfig rc;
  const auto c = rc.encoder_config();
  const auto t = EncoderConfig::tiny();
  CHECK(c.grid.n_h == t.grid.n_h);
  CHECK(c.d == t.d);
  CHECK(c.n_heads == t.n_heads);
  CHECK(c.n_layers == t.n_layers);
  CHECK(c.mask == t.mask);
  CHECK(c.posenc.scheme == t.posenc.scheme);
  CHECK(c.init_std == t.init_std);
}

TEST_CASE("dump lists every key once in canonical order") {
  RunConfig rc;
  rc.set("seed", "42");
  const std::string dump = rc.dump();
  CHECK(dump.rfind("task=marked\n", 0) == 0);
  CHECK(dump.find("seed=42\n") != std::string::npos);
  std::size_t lines = 0;
  for (char ch : dump) lines += ch == '\n';
  CHECK(lines == RunConfig::keys().size());
  RunConfig copy;
  copy.parse(dump);
  CHECK(copy.dump() == dump);
}

TEST_CASE("summary-only positions and policy checks") {
  RunConfig rc;
  rc.set("scheme", "none");
  CHECK_THROWS_AS(rc.encoder_config(), ConfigError);  // positionless summaries
  rc.set("summary_scheme", "sincos2d");
  const auto c = rc.encoder_config();
  CHECK(c.posenc.effective_summary_scheme() == PeScheme::sincos2d);
  rc.set("policy", "register");
  CHECK_THROWS_AS(rc.encoder_config(), ConfigError);  // registers under the fractal mask
  rc.set("mask", "full");
  CHECK_NOTHROW(rc.encoder_config());
}

TEST_CASE("datasets from config") {
  RunConfig rc;
  rc.set("train_count", "24");
  CHECK(rc.train_dataset().samples.size() == 24);
  CHECK(rc.eval_dataset().samples.size() == 16);
  rc.set("eval_repeats", "3");
  CHECK(rc.eval_dataset().samples.size() == 48);
  rc.set("train_set", "enumerated");
  CHECK(rc.train_dataset().samples.size() == 16);
  rc.set("task", "pair");
  CHECK(rc.train_dataset().samples.size() == 192);
}

TEST_CASE("checkpoint round trip is bitwise") {
  Encoder model(EncoderConfig::tiny());
  model.randomize(31);
  const std::string bytes = encode_checkpoint(snapshot(model));
  CHECK(bytes.substr(0, 4) == "FVIT");
  CHECK(bytes.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));

  Encoder other(EncoderConfig::tiny());
  restore(other, decode_checkpoint(bytes));
  const auto a = snapshot(model), b = snapshot(other);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::memcmp(a[i].tensor.data().data(), b[i].tensor.data().data(), a[i].tensor.size() * 8) == 0);
  }
  CHECK(encode_checkpoint(b) == bytes);

  const std::vector<double> img(model.config().image_size(), 0.3);
  CHECK(model.logits(img) == other.logits(img));

  const auto path = (std::filesystem::temp_directory_path() / "fvit_test_roundtrip.ckpt").string();
  save_checkpoint(path, model);
  Encoder loaded(EncoderConfig::tiny());
  load_checkpoint(path, loaded);
  CHECK(loaded.logits(img) == model.logits(img));
  std::remove(path.c_str());
}

TEST_CASE("first record layout") {
  Encoder model(EncoderConfig::tiny());
  const std::string bytes = encode_checkpoint(snapshot(model));
  // name length 12, "patch.weight", rank 2, dims 32 and 48.
  CHECK(bytes.substr(8, 4) == std::string("\x0c\x00\x00\x00", 4));
  CHECK(bytes.substr(12, 12) == "patch.weight");
  CHECK(bytes.substr(24, 4) == std::string("\x02\x00\x00\x00", 4));
  CHECK(bytes.substr(28, 4) == std::string("\x20\x00\x00\x00", 4));
  CHECK(bytes.substr(32, 4) == std::string("\x30\x00\x00\x00", 4));
}

TEST_CASE("malformed checkpoints are rejected") {
  Encoder model(EncoderConfig::tiny());
  const std::string bytes = encode_checkpoint(snapshot(model));
  CHECK_THROWS_AS(decode_checkpoint("NOPE" + bytes.substr(4)), IoError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
  std::string bumped = bytes;
  bumped[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bumped), IoError);

  EncoderConfig wider = EncoderConfig::tiny();
  wider.d = 64;
  Encoder other(wider);
  CHECK_THROWS_AS(restore(other, decode_checkpoint(bytes)), IoError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt", model), IoError);
}
