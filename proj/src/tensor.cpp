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

#include "fvit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "fvit/error.hpp"

namespace fvit {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != product(shape_))
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

void Tensor::ensure_grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
}

void Tensor::zero_grad() {
  if (grad_.empty())
    grad_.assign(data_.size(), 0.0);
  else
    std::fill(grad_.begin(), grad_.end(), 0.0);
}

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& param) {
  Tensor copy(param.shape(), std::vector<double>(param.data().begin(), param.data().end()));
  nodes_.push_back(Node{std::move(copy), {}, &param, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Pullback pullback) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(pullback));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Pullback pullback) {
  bool any = false;
  for (const auto& v : inputs) any = any || nodes_[v.id()].needs_grad;
  Node node{std::move(value), {}, nullptr, any, {}};
  if (any) node.pullback = std::move(pullback);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::adjoint(Var v) {
  auto& node = nodes_[v.id()];
  if (node.adj.empty()) node.adj.assign(node.value.size(), 0.0);
  return node.adj;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss was recorded on another tape");
  if (value(loss).size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(value(loss).shape()));
  for (auto& node : nodes_) node.adj.clear();
  adjoint(loss)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.adj.empty() || !node.needs_grad) continue;
    if (node.param) {
      node.param->ensure_grad();
      auto g = node.param->grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += node.adj[j];
    }
    if (node.pullback) node.pullback(*this, node.value, node.adj);
  }
}

// --------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, std::span<const double> g) {
    for (Var v : {a, b}) {
      if (!t.needs_grad(v)) continue;
      auto adj = t.adjoint(v);
      for (std::size_t i = 0; i < g.size(); ++i) adj[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, std::span<const double> g) {
    if (t.needs_grad(a)) {
      auto adj = t.adjoint(a);
      for (std::size_t i = 0; i < g.size(); ++i) adj[i] += g[i];
    }
    if (t.needs_grad(b)) {
      auto adj = t.adjoint(b);
      for (std::size_t i = 0; i < g.size(); ++i) adj[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, std::span<const double> g) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (t.needs_grad(a)) {
      auto adj = t.adjoint(a);
      for (std::size_t i = 0; i < g.size(); ++i) adj[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      auto adj = t.adjoint(b);
      for (std::size_t i = 0; i < g.size(); ++i) adj[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& x : out.data()) x *= s;
  return a.tape().record(std::move(out), {a}, [a, s](Tape& t, const Tensor&, std::span<const double> g) {
    auto adj = t.adjoint(a);
    for (std::size_t i = 0; i < g.size(); ++i) adj[i] += s * g[i];
  });
}

Var add_rowwise(Var x, Var b) {
  const auto& xv = x.value();
  const auto& bv = b.value();
  require_matrix("add_rowwise", xv);
  if (bv.size() != xv.cols())
    throw DimensionError("add_rowwise: shape mismatch " + shape_string(xv.shape()) + " vs " +
                         shape_string(bv.shape()));
  Tensor out = xv;
  const std::size_t n = xv.rows(), m = xv.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) += bv[c];
  return x.tape().record(std::move(out), {x, b}, [x, b, n, m](Tape& t, const Tensor&, std::span<const double> g) {
    if (t.needs_grad(x)) {
      auto adj = t.adjoint(x);
      for (std::size_t i = 0; i < g.size(); ++i) adj[i] += g[i];
    }
    if (t.needs_grad(b)) {
      auto adj = t.adjoint(b);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) adj[c] += g[r * m + c];
    }
  });
}

// --------------------------------------------------------------------------
// Matrix products

namespace {

// Four independent partial sums let the compiler vectorize without
// reassociation flags. The summation order is fixed, so results stay
// deterministic.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

Var matmul(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw DimensionError("matmul: shape mismatch " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  const std::size_t m = av.rows(), p = av.cols(), q = bv.cols();
  Tensor out({m, q});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t r = 0; r < p; ++r) {
      const double air = av.at(i, r);
      const double* brow = &bv.data()[r * q];
      double* orow = &out.data()[i * q];
      for (std::size_t j = 0; j < q; ++j) orow[j] += air * brow[j];
    }
  return a.tape().record(std::move(out), {a, b}, [a, b, m, p, q](Tape& t, const Tensor&, std::span<const double> g) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (t.needs_grad(a)) {
      // dA = dC · Bᵀ
      auto adj = t.adjoint(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < p; ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < q; ++j) s += g[i * q + j] * bv.data()[r * q + j];
          adj[i * p + r] += s;
        }
    }
    if (t.needs_grad(b)) {
      // dB = Aᵀ · dC
      auto adj = t.adjoint(b);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < p; ++r) {
          const double air = av.data()[i * p + r];
          for (std::size_t j = 0; j < q; ++j) adj[r * q + j] += air * g[i * q + j];
        }
    }
  });
}

Var transpose(Var a) {
  const auto& av = a.value();
  require_matrix("transpose", av);
  const std::size_t n = av.rows(), m = av.cols();
  Tensor out({m, n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out.at(c, r) = av.at(r, c);
  return a.tape().record(std::move(out), {a}, [a, n, m](Tape& t, const Tensor&, std::span<const double> g) {
    auto adj = t.adjoint(a);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) adj[r * m + c] += g[c * n + r];
  });
}

Var linear(Var x, Var weight, Var bias) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const auto& bv = bias.value();
  require_matrix("linear", xv);
  require_matrix("linear", wv);
  if (wv.cols() != xv.cols() || bv.size() != wv.rows())
    throw DimensionError("linear: shape mismatch " + shape_string(xv.shape()) + " vs " +
                         shape_string(wv.shape()) + " + " + shape_string(bv.shape()));
  const std::size_t n = xv.rows(), in = xv.cols(), out_dim = wv.rows();
  Tensor out({n, out_dim});
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = &xv.data()[i * in];
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = &wv.data()[o * in];
      out.at(i, o) = dot(xr, wr, in) + bv[o];
    }
  }
  return x.tape().record(
      std::move(out), {x, weight, bias},
      [x, weight, bias, n, in, out_dim](Tape& t, const Tensor&, std::span<const double> g) {
        const auto& xv = t.value(x);
        const auto& wv = t.value(weight);
        if (t.needs_grad(x)) {
          auto adj = t.adjoint(x);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < out_dim; ++o) {
              const double go = g[i * out_dim + o];
              if (go == 0.0) continue;
              const double* wr = &wv.data()[o * in];
              for (std::size_t k = 0; k < in; ++k) adj[i * in + k] += go * wr[k];
            }
        }
        if (t.needs_grad(weight)) {
          auto adj = t.adjoint(weight);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < out_dim; ++o) {
              const double go = g[i * out_dim + o];
              if (go == 0.0) continue;
              const double* xr = &xv.data()[i * in];
              for (std::size_t k = 0; k < in; ++k) adj[o * in + k] += go * xr[k];
            }
        }
        if (t.needs_grad(bias)) {
          auto adj = t.adjoint(bias);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < out_dim; ++o) adj[o] += g[i * out_dim + o];
        }
      });
}

// --------------------------------------------------------------------------
// Reshaping

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  require_matrix("slice_cols", xv);
  const std::size_t n = xv.rows(), m = xv.cols();
  if (count == 0 || begin + count > m)
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_string(xv.shape()));
  Tensor out({n, count});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = xv.at(r, begin + c);
  return x.tape().record(std::move(out), {x}, [x, n, m, begin, count](Tape& t, const Tensor&, std::span<const double> g) {
    auto adj = t.adjoint(x);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < count; ++c) adj[r * m + begin + c] += g[r * count + c];
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  require_matrix("slice_rows", xv);
  const std::size_t n = xv.rows(), m = xv.cols();
  if (count == 0 || begin + count > n)
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_string(xv.shape()));
  std::vector<double> data(xv.data().begin() + begin * m, xv.data().begin() + (begin + count) * m);
  Tensor out({count, m}, std::move(data));
  return x.tape().record(std::move(out), {x}, [x, m, begin](Tape& t, const Tensor&, std::span<const double> g) {
    auto adj = t.adjoint(x);
    for (std::size_t i = 0; i < g.size(); ++i) adj[begin * m + i] += g[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].value().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p.value());
    if (p.value().rows() != n)
      throw DimensionError("concat_cols: shape mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    total += p.value().cols();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out.at(r, offset + c) = pv.at(r, c);
    offset += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), inputs, [inputs, n, total](Tape& t, const Tensor&, std::span<const double> g) {
    std::size_t offset = 0;
    for (const auto& p : inputs) {
      const std::size_t m = t.value(p).cols();
      if (t.needs_grad(p)) {
        auto adj = t.adjoint(p);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < m; ++c) adj[r * m + c] += g[r * total + offset + c];
      }
      offset += m;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t m = parts[0].value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_matrix("concat_rows", p.value());
    if (p.value().cols() != m)
      throw DimensionError("concat_rows: shape mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    rows += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(rows * m);
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(Tensor({rows, m}, std::move(data)), inputs,
                                [inputs](Tape& t, const Tensor&, std::span<const double> g) {
                                  std::size_t offset = 0;
                                  for (const auto& p : inputs) {
                                    const std::size_t len = t.value(p).size();
                                    if (t.needs_grad(p)) {
                                      auto adj = t.adjoint(p);
                                      for (std::size_t i = 0; i < len; ++i) adj[i] += g[offset + i];
                                    }
                                    offset += len;
                                  }
                                });
}

Var repeat_rows(Var row, std::size_t count) {
  const auto& rv = row.value();
  if (rv.rows() != 1 || count == 0)
    throw DimensionError("repeat_rows: expected a single row, got " + shape_string(rv.shape()));
  const std::size_t m = rv.cols();
  std::vector<double> data;
  data.reserve(count * m);
  for (std::size_t i = 0; i < count; ++i) data.insert(data.end(), rv.data().begin(), rv.data().end());
  return row.tape().record(Tensor({count, m}, std::move(data)), {row},
                           [row, count, m](Tape& t, const Tensor&, std::span<const double> g) {
                             auto adj = t.adjoint(row);
                             for (std::size_t i = 0; i < count; ++i)
                               for (std::size_t c = 0; c < m; ++c) adj[c] += g[i * m + c];
                           });
}

Var embed_rows(Var rows, std::span<const std::size_t> targets, std::size_t total) {
  const auto& rv = rows.value();
  require_matrix("embed_rows", rv);
  if (rv.rows() != targets.size())
    throw DimensionError("embed_rows: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(rv.shape()));
  const std::size_t m = rv.cols();
  Tensor out({total, m});
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= total) throw ContractError("embed_rows: target row outside output");
    for (std::size_t c = 0; c < m; ++c) out.at(targets[i], c) = rv.at(i, c);
  }
  std::vector<std::size_t> idx(targets.begin(), targets.end());
  return rows.tape().record(std::move(out), {rows}, [rows, m, idx](Tape& t, const Tensor&, std::span<const double> g) {
    auto adj = t.adjoint(rows);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < m; ++c) adj[i * m + c] += g[idx[i] * m + c];
  });
}

Var sum(Var x) {
  const auto& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor&, std::span<const double> g) {
    auto adj = t.adjoint(x);
    for (auto& a : adj) a += g[0];
  });
}

// --------------------------------------------------------------------------
// Nonlinearities

double gelu_value(double x) { return x * 0.5 * std::erfc(-x / std::numbers::sqrt2); }

Var gelu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = gelu_value(v);
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor&, std::span<const double> g) {
    const auto& xv = t.value(x);
    auto adj = t.adjoint(x);
    constexpr double inv_sqrt_2pi = 0.3989422804014326779399;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      adj[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  const auto& xv = x.value();
  const std::size_t d = xv.cols();
  const std::size_t n = xv.size() / d;
  if (d < 2) throw DimensionError("layer_norm: last dimension must be at least 2, got " + shape_string(xv.shape()));
  if (gain.value().size() != d || shift.value().size() != d)
    throw DimensionError("layer_norm: shape mismatch " + shape_string(xv.shape()) + " vs " +
                         shape_string(gain.shape()) + ", " + shape_string(shift.shape()));
  const auto& gv = gain.value();
  const auto& sv = shift.value();
  Tensor out(xv.shape());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = &xv.data()[r * d];
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (row[c] - mean) * inv_std[r];
      out[r * d + c] = gv[c] * xhat[r * d + c] + sv[c];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, shift},
      [x, gain, shift, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Tensor&, std::span<const double> g) {
        const auto& gv = t.value(gain);
        if (t.needs_grad(gain)) {
          auto adj = t.adjoint(gain);
          for (std::size_t i = 0; i < g.size(); ++i) adj[i % d] += g[i] * xhat[i];
        }
        if (t.needs_grad(shift)) {
          auto adj = t.adjoint(shift);
          for (std::size_t i = 0; i < g.size(); ++i) adj[i % d] += g[i];
        }
        if (t.needs_grad(x)) {
          auto adj = t.adjoint(x);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < n; ++r) {
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double gh = g[r * d + c] * gv[c];
              mean_g += gh;
              mean_gx += gh * xhat[r * d + c];
            }
            mean_g *= inv_d;
            mean_gx *= inv_d;
            for (std::size_t c = 0; c < d; ++c) {
              const double gh = g[r * d + c] * gv[c];
              adj[r * d + c] += inv_std[r] * (gh - mean_g - xhat[r * d + c] * mean_gx);
            }
          }
        }
      });
}

Var masked_softmax(Var logits, std::span<const std::uint8_t> allowed, std::span<const double> bias) {
  const auto& lv = logits.value();
  if (allowed.size() != lv.size())
    throw DimensionError("masked_softmax: mask has " + std::to_string(allowed.size()) +
                         " entries for logits " + shape_string(lv.shape()));
  if (!bias.empty() && bias.size() != lv.size())
    throw DimensionError("masked_softmax: bias has " + std::to_string(bias.size()) +
                         " entries for logits " + shape_string(lv.shape()));
  const std::size_t m = lv.cols();
  const std::size_t n = lv.size() / m;
  Tensor out(lv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < m; ++c) {
      const std::size_t i = r * m + c;
      if (!allowed[i]) continue;
      any = true;
      mx = std::max(mx, lv[i] + (bias.empty() ? 0.0 : bias[i]));
    }
    if (!any) throw InvalidMaskError("masked_softmax: row " + std::to_string(r) + " has no allowed entry");
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const std::size_t i = r * m + c;
      if (!allowed[i]) continue;
      out[i] = std::exp(lv[i] + (bias.empty() ? 0.0 : bias[i]) - mx);
      total += out[i];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] *= inv;
  }
  return logits.tape().record(std::move(out), {logits},
                              [logits, n, m](Tape& t, const Tensor& y, std::span<const double> g) {
                                auto adj = t.adjoint(logits);
                                for (std::size_t r = 0; r < n; ++r) {
                                  double dot = 0.0;
                                  for (std::size_t c = 0; c < m; ++c) dot += y[r * m + c] * g[r * m + c];
                                  for (std::size_t c = 0; c < m; ++c)
                                    adj[r * m + c] += y[r * m + c] * (g[r * m + c] - dot);
                                }
                              });
}

Var softmax_cross_entropy(Var logits, std::size_t label) {
  const auto& lv = logits.value();
  if (lv.rows() != 1)
    throw DimensionError("softmax_cross_entropy: expected one logits row, got " + shape_string(lv.shape()));
  if (label >= lv.size())
    throw ContractError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(lv.size()) + ")");
  double mx = lv[0];
  for (double v : lv.data()) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : lv.data()) total += std::exp(v - mx);
  const double log_z = mx + std::log(total);
  return logits.tape().record(Tensor::scalar(log_z - lv[label]), {logits},
                              [logits, label, log_z](Tape& t, const Tensor&, std::span<const double> g) {
                                const auto& lv = t.value(logits);
                                auto adj = t.adjoint(logits);
                                for (std::size_t i = 0; i < adj.size(); ++i) {
                                  const double p = std::exp(lv[i] - log_z);
                                  adj[i] += g[0] * (p - (i == label ? 1.0 : 0.0));
                                }
                              });
}

}  // namespace fvit
