// modfuse/fusion.cpp

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

#include "modfuse/fusion.hpp"

#include <cmath>

#include "modfuse/error.hpp"

namespace modfuse {

namespace {

Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

}  // namespace

ReduceParams ReduceParams::init(int hidden, Rng& rng) {
  ReduceParams p;
  p.w = fan_in_uniform({hidden, hidden}, hidden, rng);
  p.v = fan_in_uniform({hidden}, hidden, rng);
  return p;
}

Tensor attention_reduce(const Tensor& x, const std::optional<Mask>& mask,
                        const ReduceParams& params) {
  const int t = x.rows();
  const int c = x.cols();
  if (params.w.rows() != c)
    throw Error("attention_reduce: input width " + shape_str(x.shape()) +
                " does not match weights " + shape_str(params.w.shape()));
  if (mask) {
    if (static_cast<int>(mask->size()) != t)
      throw Error("attention_reduce: mask length " +
                  std::to_string(mask->size()) + " does not match " +
                  std::to_string(t) + " steps");
  }
  Tensor scores = matmul(matmul(x, params.w),
                         reshape(params.v, {params.v.dim(0), 1}));  // [T,1]
  Tensor weights = softmax(reshape(scores, {1, t}), mask);          // [1,T]
  return reshape(matmul(weights, x), {c});
}

ProjectionParams ProjectionParams::init(int hidden, int num_classes,
                                        Rng& rng) {
  ProjectionParams p;
  p.ln_gamma = Tensor::full({hidden}, 1.0, true);
  p.ln_beta = Tensor::zeros({hidden}, true);
  p.w = fan_in_uniform({hidden, num_classes}, hidden, rng);
  p.bias = fan_in_uniform({num_classes}, hidden, rng);
  return p;
}

Tensor project(const Tensor& x_bar, const Tensor& y_bar,
               const ProjectionParams& params, double dropout_p, bool training,
               Rng* rng) {
  if (x_bar.shape() != y_bar.shape())
    throw Error("project: modality vectors disagree, " +
                shape_str(x_bar.shape()) + " vs " + shape_str(y_bar.shape()));
  const int c = static_cast<int>(x_bar.size());
  Tensor fused = add(x_bar, y_bar);
  if (training && dropout_p > 0.0) {
    if (!rng) throw Error("project: training requires an rng");
    fused = dropout(fused, dropout_p, true, *rng);
  }
  Tensor normed = layer_norm(reshape(fused, {1, c}), params.ln_gamma,
                             params.ln_beta);
  Tensor logits = add_rowvec(matmul(normed, params.w), params.bias);
  return reshape(logits, {params.w.cols()});
}

}  // namespace modfuse
