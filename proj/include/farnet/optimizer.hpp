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

#pragma once

#include <string>
#include <vector>

#include "farnet/archive.hpp"
#include "farnet/layers.hpp"

namespace farnet {

struct AdadeltaConfig {
  double lr = 1e-4;
  double rho = 0.9;
  double eps = 1e-6;

  void validate() const;
};

/// Adadelta with the torch.optim.Adadelta update (no weight decay):
///   v   = rho v + (1 - rho) g^2
///   d   = sqrt(u + eps) / sqrt(v + eps) * g
///   u   = rho u + (1 - rho) d^2
///   p  -= lr d
class Adadelta {
 public:
  Adadelta(ParameterStore& store, AdadeltaConfig config);

  /// Applies one update from the accumulated gradients, scaled by `grad_scale`.
  /// Parameters without a gradient are left untouched.
  void step(float grad_scale = 1.0f);
  const AdadeltaConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }

  /// Adds "adadelta/sq/<name>" and "adadelta/acc/<name>" tensors.
  void save(TensorArchive& archive) const;
  /// Restores state saved by save(); throws ResourceError on missing or mis-shaped entries.
  void load(const TensorArchive& archive);

 private:
  ParameterStore& store_;
  AdadeltaConfig config_;
  std::vector<Tensor> square_avg_;
  std::vector<Tensor> acc_delta_;
  std::size_t steps_ = 0;
};

}  // namespace farnet
