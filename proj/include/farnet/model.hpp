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

// Feature aggregation and refinement network.
//
//   backbone taps C1..C5
//     -> aggregation: up path L5->L2, down path L2->L5, second up path L5->L1
//     -> coarse heatmaps at stride 2
//     -> refinement: image features + upsampled L1 features (+ coarse heatmaps)
//     -> fine heatmaps at stride 1

#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "farnet/backbone.hpp"
#include "farnet/layers.hpp"

namespace farnet {

enum class Fusion {
  concat,  // concatenation + 1x1 convolution
  add,     // channel-matched addition + 3x3 convolution
};

enum class Refinement {
  guided,  // coarse heatmaps feed the refinement module and are supervised
  naive,   // no coarse heatmaps in the refinement input, no coarse supervision
  none,    // coarse output only
};

std::string to_string(Fusion f);
std::string to_string(Refinement r);
Fusion fusion_from_string(const std::string& s);
Refinement refinement_from_string(const std::string& s);

struct ChannelSchedule {
  int up1_channels = 256;
  int down_path_base = 256;
  /// Second up path widths at L4, L3, L2, L1.
  std::array<int, 4> up2_channels = {256, 256, 128, 64};
  int fr_stem_channels = 32;
  int head_mid_channels = 64;
  /// Down-path fusion compresses to the doubled width (true) or to the width
  /// before doubling (false).
  bool down_keeps_doubled = true;

  void validate() const;
};

struct ModelConfig {
  BackboneKind backbone = BackboneKind::densenet121;
  int k_landmarks = 19;
  Fusion fusion = Fusion::concat;
  Refinement refinement = Refinement::guided;
  ChannelSchedule schedule;
  bool pretrained = true;
  std::string weights_path;  // tensor archive with torchvision-named backbone weights
  std::uint64_t seed = 0;    // parameter initialization

  void validate() const;
};

struct ForwardOutput {
  ag::Var coarse;  // K x H/2 x W/2
  ag::Var fine;    // K x H x W, null when refinement == none
};

/// Up-sampling block. concat: x2 upsample `coarse`, concatenate with
/// `lateral`, 1x1 convolution to `out_c`. add: 1x1 match both inputs to
/// `out_c`, x2 upsample the coarse one, sum, 3x3 convolution.
class UpFuseBlock {
 public:
  UpFuseBlock(ParameterStore& store, const std::string& name, int coarse_c, int lateral_c, int out_c, Fusion fusion,
              Rng& rng);
  ag::Var operator()(const ag::Var& coarse, const ag::Var& lateral) const;
  int out_channels() const { return out_c_; }

 private:
  Fusion fusion_;
  int out_c_;
  ConvUnit fuse_;            // concat: 1x1 over the concatenation; add: 3x3 after the sum
  ConvUnit match_coarse_;    // add only
  ConvUnit match_lateral_;   // add only
};

/// Down-sampling block: 3x3 stride-2 convolution doubling the channels of
/// `fine`, then concatenation with `lateral` and a 1x1 convolution (concat),
/// or addition of the 1x1-matched lateral and a 3x3 convolution (add).
class DownFuseBlock {
 public:
  DownFuseBlock(ParameterStore& store, const std::string& name, int fine_c, int lateral_c, Fusion fusion,
                bool keep_doubled, Rng& rng);
  ag::Var operator()(const ag::Var& fine, const ag::Var& lateral) const;
  int out_channels() const { return out_c_; }

 private:
  Fusion fusion_;
  int out_c_;
  ConvUnit down_;
  ConvUnit fuse_;
  ConvUnit match_lateral_;  // add only
};

struct MsfaOutput {
  ag::Var features_l1;  // schedule.up2_channels[3] x H/2 x W/2
  ag::Var coarse;       // K x H/2 x W/2
  /// Shape of every fused map, in evaluation order: P5 P4 P3 P2 N3 N4 N5 Q4 Q3 Q2 Q1.
  std::vector<std::pair<std::string, std::vector<int>>> trace;
};

class FarNet {
 public:
  explicit FarNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const Backbone& backbone() const { return *backbone_; }

  /// Requires H and W divisible by 32 (ShapeError otherwise).
  BackboneTaps extract_backbone_taps(const ag::Var& image) const;
  MsfaOutput msfa_forward(const BackboneTaps& taps) const;
  ag::Var fr_forward(const ag::Var& image, const BackboneTaps& taps, const ag::Var& features_l1,
                     const ag::Var& coarse) const;
  ForwardOutput forward(const ag::Var& image) const;
  ForwardOutput forward(const Tensor& image) const { return forward(ag::constant(image)); }

  /// Channels entering the refinement head's 3x3 convolution.
  int fr_concat_channels() const;

  /// Loads "backbone.*" parameters and buffers from a tensor archive of
  /// torchvision names. Throws ResourceError on a missing file or entry.
  void load_backbone_weights(const std::filesystem::path& archive);

 private:
  ModelConfig config_;
  ParameterStore store_;
  std::unique_ptr<Backbone> backbone_;

  ConvUnit p5_a_, p5_b_;
  ConvUnit p2_project_;             // only when down_path_base != up1_channels
  std::vector<UpFuseBlock> up1_;    // L4, L3, L2
  std::vector<DownFuseBlock> down_; // L3, L4, L5
  std::vector<UpFuseBlock> up2_;    // L4, L3, L2, L1
  ConvUnit coarse_mid_;
  Conv coarse_out_;
  ConvUnit fr_stem_;
  ConvUnit fine_mid_;
  Conv fine_out_;
};

}  // namespace farnet
