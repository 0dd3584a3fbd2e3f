// modfuse/fusion.hpp

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

#ifndef MODFUSE_FUSION_HPP_
#define MODFUSE_FUSION_HPP_

#include <optional>

#include "modfuse/rng.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

// Soft-attention pooling: scores_t = v_a . (W x_t), weights = softmax over
// unmasked steps, output = weighted sum of the rows.
struct ReduceParams {
  Tensor w;  // [C, C_a]; C_a == C here
  Tensor v;  // [C_a]

  static ReduceParams init(int hidden, Rng& rng);
};

// Collapses [T, C] to [C]. The output is a convex combination of the input
// rows; masked rows get exactly zero weight.
Tensor attention_reduce(const Tensor& x, const std::optional<Mask>& mask,
                        const ReduceParams& params);

struct ProjectionParams {
  Tensor ln_gamma, ln_beta;  // [C]
  Tensor w;                  // [C, num_classes]
  Tensor bias;               // [num_classes]

  static ProjectionParams init(int hidden, int num_classes, Rng& rng);
};

// logits = W . LayerNorm(dropout(x_bar + y_bar)); dropout applies to the
// summed input while training. Softmax happens at the consumer.
Tensor project(const Tensor& x_bar, const Tensor& y_bar,
               const ProjectionParams& params, double dropout_p, bool training,
               Rng* rng);

}  // namespace modfuse

#endif  // MODFUSE_FUSION_HPP_
