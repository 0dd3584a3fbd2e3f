// modfuse/tensor.hpp

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

#ifndef MODFUSE_TENSOR_HPP_
#define MODFUSE_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "modfuse/error.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {

// Dense row-major tensor of doubles with reverse-mode autodiff.
//
// Tensors are value-semantic handles onto shared storage: copying a Tensor
// aliases the same values and gradient buffer. Every op records a backward
// closure on the thread-local Tape whenever gradients are enabled and at
// least one input requires them. A Tensor and the tape it participates in
// are confined to one thread; independent model instances may run in
// parallel threads, each with its own tape.

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {
struct Storage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated only when requires_grad
  bool requires_grad = false;
  int node = -1;  // index of the tape node that produced this tensor
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);
  static Tensor normal(Shape shape, double mean, double stddev, Rng& rng,
                       bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  int dim(int i) const;
  std::size_t size() const;
  int rows() const;  // 2-D only
  int cols() const;  // 2-D only

  const std::vector<double>& values() const;
  // Mutable access for initialization, deserialization and finite
  // differencing. Never mutate a tensor that already participates in a
  // recorded graph.
  std::vector<double>& values_mut();

  double item() const;           // scalar tensors only
  double at(int i) const;        // 1-D (or flat) index
  double at(int r, int c) const; // 2-D index

  bool requires_grad() const;
  const std::vector<double>& grad() const;  // throws if no grad buffer
  std::vector<double>& grad_mut();          // optimizer-side access
  void zero_grad();

  // Deep copy, detached from the tape. Keeps requires_grad (with a fresh
  // zero gradient buffer).
  Tensor clone() const;
  // Deep value copy without gradient tracking.
  Tensor detach() const;

  int tape_node() const;

  detail::Storage* storage() const { return s_.get(); }
  std::shared_ptr<detail::Storage> s_;
};

// Execution record for reverse-mode differentiation. Nodes are appended in
// forward order, so replaying indices [0, from] backwards visits each op
// exactly once, inputs after the ops that consume them.
class Tape {
 public:
  static Tape& active();  // thread-local instance

  int record(std::function<void()> backward_fn);
  void run_backward(int from_node);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// Disables gradient recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Boolean mask over the last axis of the tensors it accompanies (attention
// keys, time steps). 1 keeps an entry, 0 removes it.
using Mask = std::vector<std::uint8_t>;

enum class NormAxis {
  kFeature,   // statistics per row, over channels (usual layer norm)
  kTemporal,  // statistics per channel, over rows
};

// ---- ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);        // same shape
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor scale(const Tensor& a, double factor);
Tensor add_rowvec(const Tensor& m, const Tensor& v); // [T,C] + [C]

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor row_slice(const Tensor& a, int begin, int end);
Tensor col_slice(const Tensor& a, int begin, int end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor broadcast_scalar(const Tensor& s, int n);  // scalar -> [n]

Tensor sum_all(const Tensor& a);  // -> scalar
// Mean over unmasked rows of a [T,C] tensor -> [1,C]. row_mask, when given,
// has length T and must keep at least one row.
Tensor mean_rows(const Tensor& a, const std::optional<Mask>& row_mask = std::nullopt);

// Row-wise softmax over the last axis, numerically stabilized by row-max
// subtraction. Masked entries come out exactly 0. 1-D input is treated as a
// single row.
Tensor softmax(const Tensor& x, const std::optional<Mask>& mask = std::nullopt);

// Standardize over the chosen axis, then apply per-channel affine gamma/beta
// (both of length C). eps sits inside the square root.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5, NormAxis axis = NormAxis::kFeature);

// Inverted dropout: in training each element is zeroed with probability p and
// survivors are scaled by 1/(1-p); in inference it is the identity.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// Gather rows of table [V,E] at the given indices -> [T,E]. Backward
// scatter-adds into the table gradient.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices);

// Stable softmax cross-entropy of a logit vector against a class index.
Tensor cross_entropy_with_logits(const Tensor& logits, int label);

// Seeds d(loss)/d(loss) = 1 and replays the tape. loss must be a scalar that
// requires grad. Gradients accumulate additively across calls.
void backward(const Tensor& loss);

// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) per element.
// f is evaluated with gradient recording disabled and must be deterministic.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double eps);

// |a-b| / max(1, |a|, |b|), the comparison used by every gradient check.
double grad_rel_error(const Tensor& autodiff, const Tensor& numeric);

}  // namespace modfuse

#endif  // MODFUSE_TENSOR_HPP_
