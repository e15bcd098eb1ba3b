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

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "farnet/autograd.hpp"

namespace farnet {

struct ParamEntry {
  std::string name;
  ag::Var var;
  bool trainable = true;
};

/// Ordered registry of every parameter and buffer of a network. Registration
/// order is stable and is the serialization order.
class ParameterStore {
 public:
  ag::Var add(const std::string& name, Tensor init, bool trainable = true);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry* find(const std::string& name) const;
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  std::vector<ParamEntry> entries_;
};

enum class NormKind {
  sample,  // statistics of the current feature map, identical in training and inference
  frozen,  // stored running statistics (pretrained backbones)
};

struct Conv {
  ag::Var weight;
  ag::Var bias;  // may be null
  int stride = 1;
  int pad = 0;

  ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
  int out_channels() const { return weight->value.dim(0); }
};

struct Norm {
  NormKind kind = NormKind::sample;
  ag::Var gamma, beta;
  ag::Var running_mean, running_var;  // buffers, frozen kind only

  ag::Var operator()(const ag::Var& x) const;
};

/// conv -> norm -> ReLU
struct ConvUnit {
  Conv conv;
  Norm norm;
  ag::Var operator()(const ag::Var& x) const { return ag::relu(norm(conv(x))); }
  int out_channels() const { return conv.out_channels(); }
};

enum class Init {
  he,     // N(0, 2 / fan_in), for convolutions feeding a rectifier
  small,  // N(0, 1e-3^2), for linear regression heads
};

using Rng = std::mt19937_64;

Conv make_conv(ParameterStore& store, const std::string& name, int in_c, int out_c, int kernel, int stride, int pad,
               bool bias, Init init, Rng& rng);
Norm make_norm(ParameterStore& store, const std::string& name, int channels, NormKind kind);
/// 'same' padding for odd kernels.
ConvUnit make_unit(ParameterStore& store, const std::string& name, int in_c, int out_c, int kernel, int stride,
                   Rng& rng, NormKind norm = NormKind::sample);

}  // namespace farnet
