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

// Backbone feature extractors. Parameter names follow the torchvision
// state_dict layout (prefixed with "backbone.") so ImageNet weights exported
// by tools/export_torchvision_weights.py load by name.

#pragma once

#include <array>
#include <memory>
#include <string>

#include "farnet/layers.hpp"

namespace farnet {

enum class BackboneKind { densenet121, densenet169, resnet101, resnet152, vgg16, vgg19, toy };

std::string to_string(BackboneKind k);
BackboneKind backbone_from_string(const std::string& s);

/// Feature maps C1..C5 at strides 2, 4, 8, 16, 32 of the network input. c0
/// (stride 1) is only produced by backbones whose first block keeps the full
/// resolution (VGG).
struct BackboneTaps {
  ag::Var c0;
  std::array<ag::Var, 5> c;  // c[0] = C1 ... c[4] = C5
};

class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual BackboneTaps forward(const ag::Var& image) const = 0;
  /// Channel widths of C1..C5.
  virtual std::array<int, 5> tap_channels() const = 0;
  /// Width of c0, or 0 when the backbone has no full-resolution tap.
  virtual int l0_channels() const { return 0; }
  /// Inputs standardized with ImageNet statistics (true) or scaled to [0,1] (false).
  virtual bool imagenet_input() const { return true; }
};

std::unique_ptr<Backbone> make_backbone(BackboneKind kind, ParameterStore& store, Rng& rng);

/// Published stage widths, available without building the network.
std::array<int, 5> backbone_tap_channels(BackboneKind kind);

}  // namespace farnet
