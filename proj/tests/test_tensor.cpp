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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "fvit/error.hpp"
#include "fvit/rng.hpp"
#include "fvit/tensor.hpp"

using namespace fvit;
using fvit::testing::max_fd_error;
using fvit::testing::random_tensor;
using fvit::testing::weighted_sum;

namespace {

Tensor eval(Var v) { return v.value(); }

// Naive triple loop, written independently of the library kernel.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<double> c(m * q, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < q; ++j)
      for (std::size_t r = 0; r < p; ++r) c[i * q + j] += a[i * p + r] * b[r * q + j];
  return c;
}

}  // namespace

TEST_CASE("tensor shape and data agree") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ContractError);
  t.ensure_grad();
  CHECK(t.grad().size() == t.size());
}

TEST_CASE("matmul examples") {
  Tape tape;
  auto a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto id = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  CHECK(eval(matmul(a, id)) == Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto col = tape.constant(Tensor::matrix(2, 1, {5, 6}));
  CHECK(eval(matmul(a, col)) == Tensor::matrix(2, 1, {17, 39}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul agrees with a naive loop on random inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.below(16), p = 1 + rng.below(16), q = 1 + rng.below(16);
    Tensor a = random_tensor({m, p}, rng), b = random_tensor({p, q}, rng);
    Tape tape;
    const Tensor c = eval(matmul(tape.constant(a), tape.constant(b)));
    const auto ref = naive_matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(c[i] - ref[i]) <= 1e-12);
  }
}

TEST_CASE("masked softmax examples") {
  Tape tape;
  const std::vector<std::uint8_t> first{1, 0};
  auto y = eval(masked_softmax(tape.constant(Tensor::matrix(1, 2, {0, 0})), first));
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 0.0);

  const std::vector<std::uint8_t> all3{1, 1, 1};
  y = eval(masked_softmax(tape.constant(Tensor::matrix(1, 3, {1, 1, 1})), all3));
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const std::vector<std::uint8_t> all2{1, 1};
  y = eval(masked_softmax(tape.constant(Tensor::matrix(1, 2, {0, std::log(2.0)})), all2));
  CHECK(y[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));
}

TEST_CASE("masked softmax rows sum to one and excluded entries are bitwise zero") {
  Rng rng(11);
  const std::size_t n = 9;
  Tensor logits = random_tensor({n, n}, rng, 5.0), bias = random_tensor({n, n}, rng);
  std::vector<std::uint8_t> allowed(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) allowed[i * n + j] = (i == j) || rng.below(2) == 0;
  Tape tape;
  const Tensor y = eval(masked_softmax(tape.constant(logits), allowed, bias.data()));
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!allowed[i * n + j]) CHECK(std::signbit(y.at(i, j)) == false);
      if (!allowed[i * n + j]) CHECK(y.at(i, j) == 0.0);
      total += y.at(i, j);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("masked softmax rejects a row with nothing allowed") {
  Tape tape;
  const std::vector<std::uint8_t> allowed{1, 0, 0, 0};
  CHECK_THROWS_AS(masked_softmax(tape.constant(Tensor({2, 2})), allowed), InvalidMaskError);
}

TEST_CASE("layer norm examples") {
  Tape tape;
  auto gain = tape.constant(Tensor::vector({1, 1}));
  auto shift = tape.constant(Tensor::vector({0, 0}));
  auto flat = eval(layer_norm(tape.constant(Tensor::matrix(1, 2, {1, 1})), gain, shift));
  CHECK(flat[0] == 0.0);
  CHECK(flat[1] == 0.0);
  auto unit = eval(layer_norm(tape.constant(Tensor::matrix(1, 2, {-1, 1})), gain, shift, 0.0));
  CHECK(unit[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(unit[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(layer_norm(tape.constant(Tensor::matrix(1, 1, {3})), tape.constant(Tensor::vector({1})),
                             tape.constant(Tensor::vector({0}))),
                  ContractError);
}

TEST_CASE("gelu uses the exact Gaussian CDF") {
  CHECK(gelu_value(0.0) == 0.0);
  CHECK(std::abs(gelu_value(10.0) - 10.0) < 1e-9);
  // Exact form at 1: Phi(1) = 0.841344746068543; the tanh surrogate gives 0.841192.
  CHECK(gelu_value(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-15));
  Tensor x = Tensor::vector({0.0});
  x.zero_grad();
  Tape tape;
  tape.backward(sum(gelu(tape.parameter(x))));
  CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("backward basics") {
  Rng rng(3);
  Tensor x = random_tensor({3, 4}, rng);
  x.zero_grad();
  {
    Tape tape;
    tape.backward(sum(tape.parameter(x)));
  }
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  {
    Tape tape;
    auto v = tape.parameter(x);
    tape.backward(scale(sum(mul(v, v)), 0.5));
  }
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(x[i]).epsilon(1e-15));

  SUBCASE("repeated backward accumulates") {
    x.zero_grad();
    for (int r = 0; r < 2; ++r) {
      Tape tape;
      tape.backward(sum(tape.parameter(x)));
    }
    for (double g : x.grad()) CHECK(g == 2.0);
  }

  SUBCASE("non-scalar loss is a contract error") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(tape.parameter(x)), ContractError);
  }
}

TEST_CASE("backward visits every node once in reverse creation order") {
  Tensor x = Tensor::vector({1.0});
  Tape tape;
  std::vector<int> visits;
  Var cur = tape.parameter(x);
  for (int i = 0; i < 5; ++i) {
    Var in = cur;
    cur = tape.record(Tensor::vector({1.0}), {in}, [in, i, &visits](Tape& t, const Tensor&, std::span<const double> g) {
      visits.push_back(i);
      t.adjoint(in)[0] += g[0];
    });
  }
  tape.backward(cur);
  CHECK(visits == std::vector<int>{4, 3, 2, 1, 0});
}

TEST_CASE("every primitive matches central differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t m = 1 + rng.below(8), n = 2 + rng.below(7), q = 1 + rng.below(8);
    const std::uint64_t w = 100 + trial;
    Tensor a = random_tensor({m, n}, rng), b = random_tensor({m, n}, rng);
    Tensor c = random_tensor({n, q}, rng), bias = random_tensor({n}, rng);
    Tensor wt = random_tensor({q, n}, rng), bq = random_tensor({q}, rng);
    Tensor gain = random_tensor({n}, rng), shift = random_tensor({n}, rng);
    using V = std::vector<Var>;
    CAPTURE(m);
    CAPTURE(n);

    CHECK(max_fd_error({&a, &b}, [&](Tape& t, const V& v) { return weighted_sum(t, add(v[0], v[1]), w); }) < 1e-6);
    CHECK(max_fd_error({&a, &b}, [&](Tape& t, const V& v) { return weighted_sum(t, sub(v[0], v[1]), w); }) < 1e-6);
    CHECK(max_fd_error({&a, &b}, [&](Tape& t, const V& v) { return weighted_sum(t, mul(v[0], v[1]), w); }) < 1e-6);
    CHECK(max_fd_error({&a}, [&](Tape& t, const V& v) { return weighted_sum(t, scale(v[0], -1.7), w); }) < 1e-6);
    CHECK(max_fd_error({&a, &bias},
                       [&](Tape& t, const V& v) { return weighted_sum(t, add_rowwise(v[0], v[1]), w); }) < 1e-6);
    CHECK(max_fd_error({&a, &c}, [&](Tape& t, const V& v) { return weighted_sum(t, matmul(v[0], v[1]), w); }) < 1e-6);
    CHECK(max_fd_error({&a}, [&](Tape& t, const V& v) { return weighted_sum(t, transpose(v[0]), w); }) < 1e-6);
    CHECK(max_fd_error({&a, &wt, &bq},
                       [&](Tape& t, const V& v) { return weighted_sum(t, linear(v[0], v[1], v[2]), w); }) < 1e-6);
    CHECK(max_fd_error({&a},
                       [&](Tape& t, const V& v) { return weighted_sum(t, slice_cols(v[0], 1, n - 1), w); }) < 1e-6);
    CHECK(max_fd_error({&a}, [&](Tape& t, const V& v) { return weighted_sum(t, slice_rows(v[0], 0, 1), w); }) < 1e-6);
    CHECK(max_fd_error({&a, &b}, [&](Tape& t, const V& v) {
            const Var parts[] = {v[0], v[1]};
            return weighted_sum(t, concat_cols(parts), w);
          }) < 1e-6);
    CHECK(max_fd_error({&a, &b}, [&](Tape& t, const V& v) {
            const Var parts[] = {v[0], v[1]};
            return weighted_sum(t, concat_rows(parts), w);
          }) < 1e-6);
    CHECK(max_fd_error({&a}, [&](Tape& t, const V& v) {
            return weighted_sum(t, repeat_rows(slice_rows(v[0], 0, 1), 3), w);
          }) < 1e-6);
    CHECK(max_fd_error({&a}, [&](Tape& t, const V& v) {
            std::vector<std::size_t> targets(m);
            for (std::size_t i = 0; i < m; ++i) targets[i] = 2 * i + 1;
            return weighted_sum(t, embed_rows(v[0], targets, 2 * m + 1), w);
          }) < 1e-6);
    CHECK(max_fd_error({&a}, [&](Tape& t, const V& v) { return weighted_sum(t, gelu(v[0]), w); }) < 1e-6);
    // Rows of width >= 3 keep the spread away from the eps-dominated corner
    // where central differences themselves lose accuracy.
    Tensor wide = random_tensor({m, n + 1}, rng), wide_gain = random_tensor({n + 1}, rng);
    Tensor wide_shift = random_tensor({n + 1}, rng);
    CHECK(max_fd_error({&wide, &wide_gain, &wide_shift}, [&](Tape& t, const V& v) {
            return weighted_sum(t, layer_norm(v[0], v[1], v[2]), w);
          }) < 1e-5);

    std::vector<std::uint8_t> allowed(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) allowed[i * n + j] = (j == i % n) || rng.below(3) != 0;
    CHECK(max_fd_error({&a}, [&](Tape& t, const V& v) {
            return weighted_sum(t, masked_softmax(v[0], allowed, b.data()), w);
          }) < 1e-6);
    CHECK(max_fd_error({&a}, [&](Tape&, const V& v) {
            return softmax_cross_entropy(slice_rows(v[0], 0, 1), n - 1);
          }) < 1e-6);
  }
}

TEST_CASE("cross entropy rejects labels outside the class range") {
  Tape tape;
  CHECK_THROWS_AS(softmax_cross_entropy(tape.constant(Tensor::matrix(1, 3, {0, 0, 0})), 3), ContractError);
}
