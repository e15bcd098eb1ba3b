// Copyright 2026 The FARNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode differentiation over Tensor-valued nodes.
//
// Each op returns a Var that owns its value and, when gradients are enabled and
// some input requires them, keeps its inputs alive together with a closure
// that propagates the output gradient back. backward() replays those closures
// in reverse creation order, which is deterministic.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "farnet/tensor.hpp"

namespace farnet::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient storage, zero-initialized on first use.
  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
/// Trainable leaf.
Var parameter(Tensor value);

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Propagates `seed` (d loss / d root) to every reachable node that requires gradients.
void backward(const Var& root, const Tensor& seed);
/// Several roots in one pass; a root may also be an ancestor of another root.
void backward(const std::vector<std::pair<Var, Tensor>>& roots);

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var sample_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);
/// Normalization with stored statistics (inference-mode batch norm).
Var frozen_norm(const Var& x, const Var& gamma, const Var& beta, const Tensor& mean, const Tensor& var,
                float eps = 1e-5f);
Var relu(const Var& x);
Var upsample2x(const Var& x);
/// Channel-wise concatenation; all inputs must share H and W.
Var concat(const std::vector<Var>& parts);
Var add(const Var& a, const Var& b);
Var max_pool(const Var& x, int kernel, int stride, int pad);
Var avg_pool2x2(const Var& x);

}  // namespace farnet::ag
