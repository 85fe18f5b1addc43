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

// Drives the installed CLI binary as a subprocess.

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "reference_mask.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = FVIT_CLI_PATH;
const std::string kConfigDir = FVIT_CONFIG_DIR;

fs::path work_dir() {
  const fs::path dir = FVIT_WORK_DIR;
  fs::create_directories(dir);
  return dir;
}

std::string in_work(const std::string& name) { return (work_dir() / name).string(); }

// Runs `args` through the shell with stdout sent to `out_name` in the work dir.
int run(const std::string& args, const std::string& out_name = "stdout.txt", const std::string& env = "") {
  const std::string cmd = env + " '" + kCli + "' " + args + " > '" + in_work(out_name) + "' 2> '" +
                          in_work(out_name + ".err") + "'";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<double> split_numbers(const std::string& line) {
  std::vector<double> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(std::stod(cell));
  return out;
}

// Value of a "key=value" or "key value" line.
double field(const std::string& text, const std::string& key) {
  for (const auto& line : lines_of(text))
    if (line.rfind(key, 0) == 0 && line.size() > key.size() && (line[key.size()] == '=' || line[key.size()] == ' '))
      return std::stod(line.substr(key.size() + 1));
  FAIL("missing field " << key);
  return 0.0;
}

}  // namespace

TEST_CASE("mask export has one row per token and matches the reference listing") {
  REQUIRE(run("mask --grid 16x16 --k 4 --levels 1 --out " + in_work("m16.csv")) == 0);
  CHECK(lines_of(slurp(in_work("m16.csv"))).size() == 273);

  REQUIRE(run("mask --grid 8x8 --k 4 --levels 1 --out " + in_work("m8.csv")) == 0);
  const auto rows = lines_of(slurp(in_work("m8.csv")));
  const auto ref = fvit::testing::reference_summary_mask(8, 8, 2);
  REQUIRE(rows.size() == ref.n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto cells = split_numbers(rows[i]);
    REQUIRE(cells.size() == ref.n);
    for (std::size_t j = 0; j < cells.size(); ++j) CHECK(cells[j] == ref.at(i, j));
  }
  CHECK(slurp(in_work("stdout.txt")).find("tokens=69") != std::string::npos);
}

TEST_CASE("mask rejects a grid too small for one summary level") {
  CHECK(run("mask --grid 3x3 --k 4 --levels 1 --out " + in_work("bad.csv")) == 2);
  CHECK(run("mask --grid 4x4") == 2);
}

TEST_CASE("posenc exports unit-norm sinusoid pairs and geometric slopes") {
  REQUIRE(run("posenc --scheme sincos2d --grid 2x2 --dim 4", "pe.csv") == 0);
  const auto rows = lines_of(slurp(in_work("pe.csv")));
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    const auto cells = split_numbers(row);
    REQUIRE(cells.size() == 2 + 4 + 1);
    CHECK(cells.back() == doctest::Approx(2.0).epsilon(1e-15));
  }

  REQUIRE(run("posenc --scheme alibi-slopes --heads 8", "slopes.csv") == 0);
  const auto slopes = lines_of(slurp(in_work("slopes.csv")));
  REQUIRE(slopes.size() == 8);
  for (std::size_t h = 0; h < slopes.size(); ++h) {
    const auto cells = split_numbers(slopes[h]);
    CHECK(cells[1] == std::exp2(-static_cast<double>(h + 1)));
  }
  CHECK(run("posenc --scheme sincos2d --grid 2x2 --dim 6") == 2);
}

TEST_CASE("gradcheck passes on the tiny preset") {
  CHECK(run("gradcheck --set dim=8 --assert-max 1e-4", "grad.txt") == 0);
  const std::string out = slurp(in_work("grad.txt"));
  CHECK(field(out, "max_rel_error") < 1e-4);
  CHECK(field(out, "checked") > 0);
}

TEST_CASE("positionless encoder is invariant to within-block permutations") {
  CHECK(run("permtest --set scheme=none --set policy=none --kind within-block --assert-max 1e-10", "perm.txt") == 0);
  CHECK(field(slurp(in_work("perm.txt")), "max_deviation") <= 1e-10);
}

TEST_CASE("zero learning rate leaves accuracy unchanged") {
  REQUIRE(run("train --lr 0 --epochs 2 --set train_count=32", "lr0.txt") == 0);
  const std::string out = slurp(in_work("lr0.txt"));
  CHECK(field(out, "final_eval_acc") == field(out, "initial_eval_acc"));
}

TEST_CASE("exit codes distinguish assertion, config and usage failures") {
  CHECK(run("train --epochs 1 --set train_count=16 --assert-min 1.5") == 3);
  CHECK(run("train --set nonsense=1") == 2);
  CHECK(run("train --config " + in_work("missing.cfg")) == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train --set lr=abc") == 2);
}

TEST_CASE("repeated runs are byte-identical and checkpoints evaluate") {
  const std::string args = "train --config " + kConfigDir + "/marked.cfg --epochs 3 --checkpoint ";
  REQUIRE(run(args + in_work("a.ckpt"), "a.txt") == 0);
  REQUIRE(run(args + in_work("b.ckpt"), "b.txt") == 0);
  CHECK(slurp(in_work("a.txt")) == slurp(in_work("b.txt")));
  CHECK(slurp(in_work("a.ckpt")) == slurp(in_work("b.ckpt")));

  REQUIRE(run("eval --config " + kConfigDir + "/marked.cfg --checkpoint " + in_work("a.ckpt"), "eval.txt") == 0);
  CHECK(field(slurp(in_work("eval.txt")), "eval_accuracy") == field(slurp(in_work("a.txt")), "final_eval_acc"));
}

TEST_CASE("FVIT_SEED sets the default seed and --seed overrides it") {
  const std::string args = "train --epochs 1 --set train_count=16";
  REQUIRE(run(args, "s0.txt", "FVIT_SEED=7") == 0);
  REQUIRE(run(args + " --seed 7", "s1.txt") == 0);
  REQUIRE(run(args + " --seed 8", "s2.txt", "FVIT_SEED=7") == 0);
  CHECK(slurp(in_work("s0.txt")) == slurp(in_work("s1.txt")));
  CHECK(slurp(in_work("s0.txt")) != slurp(in_work("s2.txt")));
}
