// modfuse/gradcheck.hpp

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

#ifndef MODFUSE_GRADCHECK_HPP_
#define MODFUSE_GRADCHECK_HPP_

#include <string>
#include <vector>

#include "modfuse/model.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

constexpr double kGradTolerance = 1e-4;
constexpr double kGradEps = 1e-3;

// Central-difference checks for every differentiable op, each driven by a
// fixed random weighting of the op output.
std::vector<GradCheckResult> gradcheck_ops();

// Full-model check: runs one deterministic forward/backward (dropout off)
// on a fixed toy sample and compares every parameter gradient against
// central differences of the loss.
GradCheckResult gradcheck_model(const ModelConfig& cfg, std::uint64_t seed);

// The four variants at T<=4, C=8, B=1, heads=2.
std::vector<GradCheckResult> gradcheck_variants();

// ops + variants. Everything must pass for the suite to pass.
std::vector<GradCheckResult> gradcheck_all();

}  // namespace modfuse

#endif  // MODFUSE_GRADCHECK_HPP_
