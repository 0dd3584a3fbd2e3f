// modfuse/tensor.cpp

// Copyright 2026  The modfuse authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "modfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace modfuse {

namespace {

thread_local Tape g_tape;
thread_local int g_no_grad_depth = 0;

using StoragePtr = std::shared_ptr<detail::Storage>;

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(std::string(op) + ": produced a non-finite value");
    }
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Rows/cols view of a tensor that may be 1-D (treated as a single row) or
// 2-D. Used by the row-structured ops.
struct MatView {
  int rows;
  int cols;
};

MatView as_matrix(const Tensor& t, const char* op) {
  if (t.ndim() == 1) return {1, t.dim(0)};
  if (t.ndim() == 2) return {t.dim(0), t.dim(1)};
  throw Error(std::string(op) + ": expected 1-D or 2-D tensor, got shape " +
              shape_str(t.shape()));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw Error("invalid shape " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// ---- Tensor ----------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw Error("tensor: shape " + shape_str(shape) + " does not match " +
                std::to_string(values.size()) + " values");
  }
  check_finite(values, "tensor");
  s_ = std::make_shared<detail::Storage>();
  s_->shape = std::move(shape);
  s_->values = std::move(values);
  s_->requires_grad = requires_grad;
  if (requires_grad) s_->grad.assign(s_->values.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::normal(Shape shape, double mean, double stddev, Rng& rng,
                      bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal(mean, stddev);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  require(defined(), "tensor: undefined");
  return s_->shape;
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int i) const {
  const Shape& s = shape();
  require(i >= 0 && i < static_cast<int>(s.size()),
          "tensor: dim index out of range");
  return s[i];
}

std::size_t Tensor::size() const {
  require(defined(), "tensor: undefined");
  return s_->values.size();
}

int Tensor::rows() const {
  require(ndim() == 2, "tensor: rows() needs a 2-D tensor, got " +
                           shape_str(shape()));
  return s_->shape[0];
}

int Tensor::cols() const {
  require(ndim() == 2, "tensor: cols() needs a 2-D tensor, got " +
                           shape_str(shape()));
  return s_->shape[1];
}

const std::vector<double>& Tensor::values() const {
  require(defined(), "tensor: undefined");
  return s_->values;
}

std::vector<double>& Tensor::values_mut() {
  require(defined(), "tensor: undefined");
  return s_->values;
}

double Tensor::item() const {
  require(size() == 1, "tensor: item() needs a scalar, got shape " +
                           shape_str(shape()));
  return s_->values[0];
}

double Tensor::at(int i) const {
  require(i >= 0 && static_cast<std::size_t>(i) < size(),
          "tensor: flat index out of range");
  return s_->values[static_cast<std::size_t>(i)];
}

double Tensor::at(int r, int c) const {
  int nc = cols();
  require(r >= 0 && r < rows() && c >= 0 && c < nc,
          "tensor: index out of range");
  return s_->values[static_cast<std::size_t>(r) * nc + c];
}

bool Tensor::requires_grad() const {
  return defined() && s_->requires_grad;
}

const std::vector<double>& Tensor::grad() const {
  require(requires_grad(), "tensor: no gradient buffer");
  return s_->grad;
}

std::vector<double>& Tensor::grad_mut() {
  require(requires_grad(), "tensor: no gradient buffer");
  return s_->grad;
}

void Tensor::zero_grad() {
  require(defined(), "tensor: undefined");
  if (s_->requires_grad) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  require(defined(), "tensor: undefined");
  return Tensor(s_->shape, s_->values, s_->requires_grad);
}

Tensor Tensor::detach() const {
  require(defined(), "tensor: undefined");
  Tensor t;
  t.s_ = std::make_shared<detail::Storage>();
  t.s_->shape = s_->shape;
  t.s_->values = s_->values;
  t.s_->requires_grad = false;
  return t;
}

int Tensor::tape_node() const {
  require(defined(), "tensor: undefined");
  return s_->node;
}

// ---- Tape ------------------------------------------------------------

Tape& Tape::active() { return g_tape; }

int Tape::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::run_backward(int from_node) {
  require(from_node >= 0 && from_node < static_cast<int>(nodes_.size()),
          "tape: node out of range");
  for (int i = from_node; i >= 0; --i) nodes_[static_cast<std::size_t>(i)]();
}

void Tape::clear() { nodes_.clear(); }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

namespace {

// Marks `out` as produced by a recorded node when recording applies.
// `backward_fn` must only capture shared storage pointers.
void record_op(Tensor& out, bool inputs_require_grad,
               std::function<void()> backward_fn) {
  if (!grad_enabled() || !inputs_require_grad) return;
  out.s_->requires_grad = true;
  out.s_->grad.assign(out.s_->values.size(), 0.0);
  out.s_->node = Tape::active().record(std::move(backward_fn));
}

}  // namespace

// ---- ops ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2,
          "matmul: expected 2-D operands, got " + shape_str(a.shape()) +
              " x " + shape_str(b.shape()));
  if (a.cols() != b.rows()) {
    throw Error("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                " x " + shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> ov(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[static_cast<std::size_t>(p) * n];
      double* orow = &ov[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  check_finite(ov, "matmul");
  Tensor out({m, n}, std::move(ov));
  StoragePtr as = a.s_, bs = b.s_, os = out.s_;
  record_op(out, a.requires_grad() || b.requires_grad(), [as, bs, os, m, k, n] {
    const auto& g = os->grad;
    if (as->requires_grad) {
      // a.grad += g * b^T
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j)
            acc += g[static_cast<std::size_t>(i) * n + j] *
                   bs->values[static_cast<std::size_t>(p) * n + j];
          as->grad[static_cast<std::size_t>(i) * k + p] += acc;
        }
    }
    if (bs->requires_grad) {
      // b.grad += a^T * g
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i)
            acc += as->values[static_cast<std::size_t>(i) * k + p] *
                   g[static_cast<std::size_t>(i) * n + j];
          bs->grad[static_cast<std::size_t>(p) * n + j] += acc;
        }
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  const int r = a.rows(), c = a.cols();
  std::vector<double> ov(a.size());
  const auto& av = a.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      ov[static_cast<std::size_t>(j) * r + i] =
          av[static_cast<std::size_t>(i) * c + j];
  Tensor out({c, r}, std::move(ov));
  StoragePtr as = a.s_, os = out.s_;
  record_op(out, a.requires_grad(), [as, os, r, c] {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        as->grad[static_cast<std::size_t>(i) * c + j] +=
            os->grad[static_cast<std::size_t>(j) * r + i];
  });
  return out;
}

namespace {

Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* name,
                         double (*fwd)(double, double),
                         void (*bwd)(const StoragePtr&, const StoragePtr&,
                                     const StoragePtr&)) {
  require(a.shape() == b.shape(),
          std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
  std::vector<double> ov(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  check_finite(ov, name);
  Tensor out(a.shape(), std::move(ov));
  StoragePtr as = a.s_, bs = b.s_, os = out.s_;
  record_op(out, a.requires_grad() || b.requires_grad(),
            [as, bs, os, bwd] { bwd(as, bs, os); });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "add", [](double x, double y) { return x + y; },
      [](const StoragePtr& as, const StoragePtr& bs, const StoragePtr& os) {
        if (as->requires_grad)
          for (std::size_t i = 0; i < os->grad.size(); ++i)
            as->grad[i] += os->grad[i];
        if (bs->requires_grad)
          for (std::size_t i = 0; i < os->grad.size(); ++i)
            bs->grad[i] += os->grad[i];
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](const StoragePtr& as, const StoragePtr& bs, const StoragePtr& os) {
        if (as->requires_grad)
          for (std::size_t i = 0; i < os->grad.size(); ++i)
            as->grad[i] += os->grad[i];
        if (bs->requires_grad)
          for (std::size_t i = 0; i < os->grad.size(); ++i)
            bs->grad[i] -= os->grad[i];
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](const StoragePtr& as, const StoragePtr& bs, const StoragePtr& os) {
        if (as->requires_grad)
          for (std::size_t i = 0; i < os->grad.size(); ++i)
            as->grad[i] += os->grad[i] * bs->values[i];
        if (bs->requires_grad)
          for (std::size_t i = 0; i < os->grad.size(); ++i)
            bs->grad[i] += os->grad[i] * as->values[i];
      });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> ov(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * factor;
  check_finite(ov, "scale");
  Tensor out(a.shape(), std::move(ov));
  StoragePtr as = a.s_, os = out.s_;
  record_op(out, a.requires_grad(), [as, os, factor] {
    for (std::size_t i = 0; i < os->grad.size(); ++i)
      as->grad[i] += os->grad[i] * factor;
  });
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  MatView mv = as_matrix(m, "add_rowvec");
  require(v.size() == static_cast<std::size_t>(mv.cols),
          "add_rowvec: vector size " + shape_str(v.shape()) +
              " does not match row width of " + shape_str(m.shape()));
  const int rows = mv.rows, cols = mv.cols;
  std::vector<double> ov(m.size());
  const auto& a = m.values();
  const auto& b = v.values();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      ov[static_cast<std::size_t>(i) * cols + j] =
          a[static_cast<std::size_t>(i) * cols + j] + b[j];
  check_finite(ov, "add_rowvec");
  Tensor out(m.shape(), std::move(ov));
  StoragePtr ms = m.s_, vs = v.s_, os = out.s_;
  record_op(out, m.requires_grad() || v.requires_grad(), [ms, vs, os, rows, cols] {
    if (ms->requires_grad)
      for (std::size_t i = 0; i < os->grad.size(); ++i)
        ms->grad[i] += os->grad[i];
    if (vs->requires_grad)
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          vs->grad[j] += os->grad[static_cast<std::size_t>(i) * cols + j];
  });
  return out;
}

namespace {

Tensor unary(const Tensor& a, const char* name, double (*fwd)(double),
             double (*dfdy)(double x, double y)) {
  std::vector<double> ov(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i]);
  check_finite(ov, name);
  Tensor out(a.shape(), std::move(ov));
  StoragePtr as = a.s_, os = out.s_;
  record_op(out, a.requires_grad(), [as, os, dfdy] {
    for (std::size_t i = 0; i < os->grad.size(); ++i)
      as->grad[i] += os->grad[i] * dfdy(as->values[i], os->values[i]);
  });
  return out;
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.size(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " +
              shape_str(shape));
  Tensor out(std::move(shape), a.values());
  StoragePtr as = a.s_, os = out.s_;
  record_op(out, a.requires_grad(), [as, os] {
    for (std::size_t i = 0; i < os->grad.size(); ++i)
      as->grad[i] += os->grad[i];
  });
  return out;
}

Tensor row_slice(const Tensor& a, int begin, int end) {
  const int r = a.rows(), c = a.cols();
  require(begin >= 0 && begin < end && end <= r,
          "row_slice: range [" + std::to_string(begin) + "," +
              std::to_string(end) + ") invalid for " + shape_str(a.shape()));
  const int n = end - begin;
  std::vector<double> ov(static_cast<std::size_t>(n) * c);
  std::copy_n(a.values().begin() + static_cast<std::size_t>(begin) * c,
              ov.size(), ov.begin());
  Tensor out({n, c}, std::move(ov));
  StoragePtr as = a.s_, os = out.s_;
  record_op(out, a.requires_grad(), [as, os, begin, c] {
    for (std::size_t i = 0; i < os->grad.size(); ++i)
      as->grad[static_cast<std::size_t>(begin) * c + i] += os->grad[i];
  });
  return out;
}

Tensor col_slice(const Tensor& a, int begin, int end) {
  const int r = a.rows(), c = a.cols();
  require(begin >= 0 && begin < end && end <= c,
          "col_slice: range [" + std::to_string(begin) + "," +
              std::to_string(end) + ") invalid for " + shape_str(a.shape()));
  const int n = end - begin;
  std::vector<double> ov(static_cast<std::size_t>(r) * n);
  const auto& av = a.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j)
      ov[static_cast<std::size_t>(i) * n + j] =
          av[static_cast<std::size_t>(i) * c + begin + j];
  Tensor out({r, n}, std::move(ov));
  StoragePtr as = a.s_, os = out.s_;
  record_op(out, a.requires_grad(), [as, os, begin, r, c, n] {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < n; ++j)
        as->grad[static_cast<std::size_t>(i) * c + begin + j] +=
            os->grad[static_cast<std::size_t>(i) * n + j];
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const int c = parts[0].cols();
  int total = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    require(p.cols() == c, "concat_rows: column mismatch " +
                               shape_str(p.shape()) + " vs width " +
                               std::to_string(c));
    total += p.rows();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> ov;
  ov.reserve(static_cast<std::size_t>(total) * c);
  for (const Tensor& p : parts)
    ov.insert(ov.end(), p.values().begin(), p.values().end());
  Tensor out({total, c}, std::move(ov));
  std::vector<StoragePtr> ps;
  ps.reserve(parts.size());
  for (const Tensor& p : parts) ps.push_back(p.s_);
  StoragePtr os = out.s_;
  record_op(out, any_grad, [ps, os] {
    std::size_t offset = 0;
    for (const StoragePtr& p : ps) {
      if (p->requires_grad)
        for (std::size_t i = 0; i < p->values.size(); ++i)
          p->grad[i] += os->grad[offset + i];
      offset += p->values.size();
    }
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const int r = parts[0].rows();
  int total = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    require(p.rows() == r, "concat_cols: row mismatch " +
                               shape_str(p.shape()) + " vs height " +
                               std::to_string(r));
    total += p.cols();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> ov(static_cast<std::size_t>(r) * total);
  int col0 = 0;
  for (const Tensor& p : parts) {
    const int pc = p.cols();
    const auto& pv = p.values();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < pc; ++j)
        ov[static_cast<std::size_t>(i) * total + col0 + j] =
            pv[static_cast<std::size_t>(i) * pc + j];
    col0 += pc;
  }
  Tensor out({r, total}, std::move(ov));
  std::vector<StoragePtr> ps;
  std::vector<int> widths;
  for (const Tensor& p : parts) {
    ps.push_back(p.s_);
    widths.push_back(p.cols());
  }
  StoragePtr os = out.s_;
  record_op(out, any_grad, [ps, widths, os, r, total] {
    int c0 = 0;
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const int pc = widths[k];
      if (ps[k]->requires_grad)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < pc; ++j)
            ps[k]->grad[static_cast<std::size_t>(i) * pc + j] +=
                os->grad[static_cast<std::size_t>(i) * total + c0 + j];
      c0 += pc;
    }
  });
  return out;
}

Tensor broadcast_scalar(const Tensor& s, int n) {
  require(s.size() == 1, "broadcast_scalar: source must be scalar, got " +
                             shape_str(s.shape()));
  require(n >= 1, "broadcast_scalar: length must be positive");
  Tensor out({n}, std::vector<double>(static_cast<std::size_t>(n),
                                      s.values()[0]));
  StoragePtr ss = s.s_, os = out.s_;
  record_op(out, s.requires_grad(), [ss, os] {
    double acc = 0.0;
    for (double g : os->grad) acc += g;
    ss->grad[0] += acc;
  });
  return out;
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  Tensor out = Tensor::scalar(acc);
  StoragePtr as = a.s_, os = out.s_;
  record_op(out, a.requires_grad(), [as, os] {
    const double g = os->grad[0];
    for (double& gx : as->grad) gx += g;
  });
  return out;
}

Tensor mean_rows(const Tensor& a, const std::optional<Mask>& row_mask) {
  const int r = a.rows(), c = a.cols();
  if (row_mask) {
    require(static_cast<int>(row_mask->size()) == r,
            "mean_rows: mask length " + std::to_string(row_mask->size()) +
                " does not match " + std::to_string(r) + " rows");
  }
  int kept = 0;
  for (int i = 0; i < r; ++i)
    if (!row_mask || (*row_mask)[static_cast<std::size_t>(i)]) ++kept;
  require(kept > 0, "mean_rows: all rows masked");
  std::vector<double> ov(static_cast<std::size_t>(c), 0.0);
  const auto& av = a.values();
  for (int i = 0; i < r; ++i) {
    if (row_mask && !(*row_mask)[static_cast<std::size_t>(i)]) continue;
    for (int j = 0; j < c; ++j)
      ov[static_cast<std::size_t>(j)] += av[static_cast<std::size_t>(i) * c + j];
  }
  for (double& x : ov) x /= kept;
  Tensor out({1, c}, std::move(ov));
  StoragePtr as = a.s_, os = out.s_;
  std::optional<Mask> mask = row_mask;
  record_op(out, a.requires_grad(), [as, os, mask, r, c, kept] {
    for (int i = 0; i < r; ++i) {
      if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < c; ++j)
        as->grad[static_cast<std::size_t>(i) * c + j] +=
            os->grad[static_cast<std::size_t>(j)] / kept;
    }
  });
  return out;
}

Tensor softmax(const Tensor& x, const std::optional<Mask>& mask) {
  MatView mv = as_matrix(x, "softmax");
  const int rows = mv.rows, cols = mv.cols;
  if (mask) {
    require(static_cast<int>(mask->size()) == cols,
            "softmax: mask length " + std::to_string(mask->size()) +
                " does not match row width " + std::to_string(cols));
    bool any = false;
    for (auto m : *mask) any = any || (m != 0);
    if (!any) throw Error("softmax: mask removes every entry of a row");
  }
  const auto& xv = x.values();
  std::vector<double> ov(x.size(), 0.0);
  for (int i = 0; i < rows; ++i) {
    const double* row = &xv[static_cast<std::size_t>(i) * cols];
    double* orow = &ov[static_cast<std::size_t>(i) * cols];
    double mx = -HUGE_VAL;
    for (int j = 0; j < cols; ++j)
      if (!mask || (*mask)[static_cast<std::size_t>(j)]) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
      if (!mask || (*mask)[static_cast<std::size_t>(j)]) {
        orow[j] = std::exp(row[j] - mx);
        denom += orow[j];
      }
    }
    for (int j = 0; j < cols; ++j) orow[j] /= denom;
    if (mask)
      for (int j = 0; j < cols; ++j)
        if (!(*mask)[static_cast<std::size_t>(j)]) orow[j] = 0.0;
  }
  check_finite(ov, "softmax");
  Tensor out(x.shape(), std::move(ov));
  StoragePtr xs = x.s_, os = out.s_;
  record_op(out, x.requires_grad(), [xs, os, rows, cols] {
    // dx_i = s_i * (g_i - sum_j g_j s_j); masked entries have s_i == 0.
    for (int i = 0; i < rows; ++i) {
      const double* s = &os->values[static_cast<std::size_t>(i) * cols];
      const double* g = &os->grad[static_cast<std::size_t>(i) * cols];
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += g[j] * s[j];
      double* dx = &xs->grad[static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) dx[j] += s[j] * (g[j] - dot);
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, NormAxis axis) {
  require(eps > 0.0, "layer_norm: eps must be positive");
  MatView mv = as_matrix(x, "layer_norm");
  const int rows = mv.rows, cols = mv.cols;
  require(gamma.size() == static_cast<std::size_t>(cols) &&
              beta.size() == static_cast<std::size_t>(cols),
          "layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
              shape_str(beta.shape()) + " do not match channel count " +
              std::to_string(cols));

  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std;

  if (axis == NormAxis::kFeature) {
    inv_std.resize(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
      const double* row = &xv[static_cast<std::size_t>(i) * cols];
      double mu = 0.0;
      for (int j = 0; j < cols; ++j) mu += row[j];
      mu /= cols;
      double var = 0.0;
      for (int j = 0; j < cols; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= cols;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(i)] = inv;
      for (int j = 0; j < cols; ++j)
        xhat[static_cast<std::size_t>(i) * cols + j] = (row[j] - mu) * inv;
    }
  } else {
    inv_std.resize(static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) {
      double mu = 0.0;
      for (int i = 0; i < rows; ++i) mu += xv[static_cast<std::size_t>(i) * cols + j];
      mu /= rows;
      double var = 0.0;
      for (int i = 0; i < rows; ++i) {
        const double d = xv[static_cast<std::size_t>(i) * cols + j] - mu;
        var += d * d;
      }
      var /= rows;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(j)] = inv;
      for (int i = 0; i < rows; ++i)
        xhat[static_cast<std::size_t>(i) * cols + j] =
            (xv[static_cast<std::size_t>(i) * cols + j] - mu) * inv;
    }
  }

  std::vector<double> ov(x.size());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      ov[static_cast<std::size_t>(i) * cols + j] =
          gv[j] * xhat[static_cast<std::size_t>(i) * cols + j] + bv[j];
  check_finite(ov, "layer_norm");
  Tensor out(x.shape(), std::move(ov));

  StoragePtr xs = x.s_, gs = gamma.s_, bs = beta.s_, os = out.s_;
  auto xhat_p = std::make_shared<std::vector<double>>(std::move(xhat));
  auto inv_p = std::make_shared<std::vector<double>>(std::move(inv_std));
  record_op(
      out,
      x.requires_grad() || gamma.requires_grad() || beta.requires_grad(),
      [xs, gs, bs, os, xhat_p, inv_p, rows, cols, axis] {
        const auto& g = os->grad;
        const auto& xh = *xhat_p;
        if (gs->requires_grad) {
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
              gs->grad[j] += g[static_cast<std::size_t>(i) * cols + j] *
                             xh[static_cast<std::size_t>(i) * cols + j];
        }
        if (bs->requires_grad) {
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
              bs->grad[j] += g[static_cast<std::size_t>(i) * cols + j];
        }
        if (!xs->requires_grad) return;
        // dxhat = g * gamma; dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
        if (axis == NormAxis::kFeature) {
          for (int i = 0; i < rows; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (int j = 0; j < cols; ++j) {
              const double dxh = g[static_cast<std::size_t>(i) * cols + j] * gs->values[j];
              m1 += dxh;
              m2 += dxh * xh[static_cast<std::size_t>(i) * cols + j];
            }
            m1 /= cols;
            m2 /= cols;
            const double inv = (*inv_p)[static_cast<std::size_t>(i)];
            for (int j = 0; j < cols; ++j) {
              const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
              const double dxh = g[idx] * gs->values[j];
              xs->grad[idx] += inv * (dxh - m1 - xh[idx] * m2);
            }
          }
        } else {
          for (int j = 0; j < cols; ++j) {
            double m1 = 0.0, m2 = 0.0;
            for (int i = 0; i < rows; ++i) {
              const double dxh = g[static_cast<std::size_t>(i) * cols + j] * gs->values[j];
              m1 += dxh;
              m2 += dxh * xh[static_cast<std::size_t>(i) * cols + j];
            }
            m1 /= rows;
            m2 /= rows;
            const double inv = (*inv_p)[static_cast<std::size_t>(j)];
            for (int i = 0; i < rows; ++i) {
              const std::size_t idx = static_cast<std::size_t>(i) * cols + j;
              const double dxh = g[idx] * gs->values[j];
              xs->grad[idx] += inv * (dxh - m1 - xh[idx] * m2);
            }
          }
        }
      });
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  require(p >= 0.0 && p < 1.0,
          "dropout: p must lie in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> ov(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double m = rng.uniform() >= p ? keep_scale : 0.0;
    (*mask)[i] = m;
    ov[i] = xv[i] * m;
  }
  Tensor out(x.shape(), std::move(ov));
  StoragePtr xs = x.s_, os = out.s_;
  record_op(out, x.requires_grad(), [xs, os, mask] {
    for (std::size_t i = 0; i < os->grad.size(); ++i)
      xs->grad[i] += os->grad[i] * (*mask)[i];
  });
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices) {
  const int v = table.rows(), e = table.cols();
  require(!indices.empty(), "embedding_lookup: empty index sequence");
  for (int idx : indices) {
    if (idx < 0 || idx >= v)
      throw Error("embedding_lookup: index " + std::to_string(idx) +
                  " out of range for table " + shape_str(table.shape()));
  }
  const int t = static_cast<int>(indices.size());
  std::vector<double> ov(static_cast<std::size_t>(t) * e);
  const auto& tv = table.values();
  for (int i = 0; i < t; ++i)
    std::copy_n(tv.begin() + static_cast<std::size_t>(indices[static_cast<std::size_t>(i)]) * e,
                e, ov.begin() + static_cast<std::size_t>(i) * e);
  Tensor out({t, e}, std::move(ov));
  StoragePtr ts = table.s_, os = out.s_;
  std::vector<int> idx = indices;
  record_op(out, table.requires_grad(), [ts, os, idx, e] {
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < e; ++j)
        ts->grad[static_cast<std::size_t>(idx[i]) * e + j] +=
            os->grad[i * static_cast<std::size_t>(e) + j];
  });
  return out;
}

Tensor cross_entropy_with_logits(const Tensor& logits, int label) {
  MatView mv = as_matrix(logits, "cross_entropy");
  require(mv.rows == 1, "cross_entropy: expected a single logit vector, got " +
                            shape_str(logits.shape()));
  const int k = mv.cols;
  require(label >= 0 && label < k,
          "cross_entropy: label " + std::to_string(label) +
              " out of range for " + std::to_string(k) + " classes");
  const auto& z = logits.values();
  double mx = -HUGE_VAL;
  for (int j = 0; j < k; ++j) mx = std::max(mx, z[static_cast<std::size_t>(j)]);
  double denom = 0.0;
  for (int j = 0; j < k; ++j) denom += std::exp(z[static_cast<std::size_t>(j)] - mx);
  const double lse = mx + std::log(denom);
  Tensor out = Tensor::scalar(lse - z[static_cast<std::size_t>(label)]);
  StoragePtr zs = logits.s_, os = out.s_;
  record_op(out, logits.requires_grad(), [zs, os, label, k, mx, denom] {
    const double g = os->grad[0];
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(zs->values[static_cast<std::size_t>(j)] - mx) / denom;
      zs->grad[static_cast<std::size_t>(j)] +=
          g * (p - (j == label ? 1.0 : 0.0));
    }
  });
  return out;
}

void backward(const Tensor& loss) {
  require(loss.defined(), "backward: undefined loss");
  if (loss.size() != 1)
    throw Error("backward: loss must be scalar, got shape " +
                shape_str(loss.shape()));
  require(loss.requires_grad(),
          "backward: loss does not require grad (nothing on the tape)");
  loss.s_->grad[0] += 1.0;
  if (loss.tape_node() >= 0) Tape::active().run_backward(loss.tape_node());
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double eps) {
  require(eps > 0.0, "finite_difference_grad: eps must be positive");
  NoGradGuard no_grad;
  Tensor probe = x.detach();  // private copy we can perturb
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = probe.s_->values[i];
    probe.s_->values[i] = orig + eps;
    const double fp = f(probe);
    probe.s_->values[i] = orig - eps;
    const double fm = f(probe);
    probe.s_->values[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return Tensor(x.shape(), std::move(g));
}

double grad_rel_error(const Tensor& autodiff, const Tensor& numeric) {
  require(autodiff.shape() == numeric.shape(),
          "grad_rel_error: shape mismatch " + shape_str(autodiff.shape()) +
              " vs " + shape_str(numeric.shape()));
  double worst = 0.0;
  const auto& a = autodiff.values();
  const auto& b = numeric.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace modfuse
