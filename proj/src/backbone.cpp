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

#include "farnet/backbone.hpp"

#include <vector>

#include "farnet/errors.hpp"

namespace farnet {

std::string to_string(BackboneKind k) {
  switch (k) {
    case BackboneKind::densenet121: return "densenet121";
    case BackboneKind::densenet169: return "densenet169";
    case BackboneKind::resnet101: return "resnet101";
    case BackboneKind::resnet152: return "resnet152";
    case BackboneKind::vgg16: return "vgg16";
    case BackboneKind::vgg19: return "vgg19";
    case BackboneKind::toy: return "toy";
  }
  return "unknown";
}

BackboneKind backbone_from_string(const std::string& s) {
  for (auto k : {BackboneKind::densenet121, BackboneKind::densenet169, BackboneKind::resnet101,
                 BackboneKind::resnet152, BackboneKind::vgg16, BackboneKind::vgg19, BackboneKind::toy})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown backbone '" + s + "'");
}

namespace {

const std::string kPrefix = "backbone.";

// ---------------------------------------------------------------------------
// Toy: five randomly initialized stages of stride-2 convolutions.

class ToyBackbone final : public Backbone {
 public:
  static constexpr std::array<int, 5> kWidths = {8, 16, 32, 64, 128};

  ToyBackbone(ParameterStore& store, Rng& rng) {
    int in = 3;
    for (int s = 0; s < 5; ++s) {
      const std::string name = kPrefix + "stage" + std::to_string(s + 1);
      Stage st;
      st.down = make_unit(store, name + ".0", in, kWidths[s], 3, 2, rng);
      if (s > 0) st.refine = make_unit(store, name + ".1", kWidths[s], kWidths[s], 3, 1, rng);
      st.has_refine = s > 0;
      stages_.push_back(st);
      in = kWidths[s];
    }
  }

  BackboneTaps forward(const ag::Var& image) const override {
    BackboneTaps taps;
    ag::Var x = image;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      x = stages_[s].down(x);
      if (stages_[s].has_refine) x = stages_[s].refine(x);
      taps.c[s] = x;
    }
    return taps;
  }

  std::array<int, 5> tap_channels() const override { return kWidths; }
  bool imagenet_input() const override { return false; }

 private:
  struct Stage {
    ConvUnit down;
    ConvUnit refine;
    bool has_refine = false;
  };
  std::vector<Stage> stages_;
};

// ---------------------------------------------------------------------------
// ResNet v1.5 (stride on the 3x3 convolution of the bottleneck).

class ResNetBackbone final : public Backbone {
 public:
  ResNetBackbone(ParameterStore& store, Rng& rng, std::array<int, 4> blocks) {
    conv1_ = make_conv(store, kPrefix + "conv1", 3, 64, 7, 2, 3, false, Init::he, rng);
    bn1_ = make_norm(store, kPrefix + "bn1", 64, NormKind::frozen);
    int in = 64;
    const std::array<int, 4> planes = {64, 128, 256, 512};
    for (int l = 0; l < 4; ++l) {
      for (int b = 0; b < blocks[static_cast<std::size_t>(l)]; ++b) {
        const std::string name = kPrefix + "layer" + std::to_string(l + 1) + "." + std::to_string(b);
        const int p = planes[static_cast<std::size_t>(l)];
        const int stride = (b == 0 && l > 0) ? 2 : 1;
        Bottleneck bl;
        bl.conv1 = make_conv(store, name + ".conv1", in, p, 1, 1, 0, false, Init::he, rng);
        bl.bn1 = make_norm(store, name + ".bn1", p, NormKind::frozen);
        bl.conv2 = make_conv(store, name + ".conv2", p, p, 3, stride, 1, false, Init::he, rng);
        bl.bn2 = make_norm(store, name + ".bn2", p, NormKind::frozen);
        bl.conv3 = make_conv(store, name + ".conv3", p, 4 * p, 1, 1, 0, false, Init::he, rng);
        bl.bn3 = make_norm(store, name + ".bn3", 4 * p, NormKind::frozen);
        if (b == 0) {
          bl.has_downsample = true;
          bl.down_conv = make_conv(store, name + ".downsample.0", in, 4 * p, 1, stride, 0, false, Init::he, rng);
          bl.down_bn = make_norm(store, name + ".downsample.1", 4 * p, NormKind::frozen);
        }
        layers_[static_cast<std::size_t>(l)].push_back(bl);
        in = 4 * p;
      }
    }
  }

  BackboneTaps forward(const ag::Var& image) const override {
    BackboneTaps taps;
    ag::Var x = ag::relu(bn1_(conv1_(image)));
    taps.c[0] = x;
    x = ag::max_pool(x, 3, 2, 1);
    for (std::size_t l = 0; l < 4; ++l) {
      for (const Bottleneck& b : layers_[l]) {
        ag::Var y = ag::relu(b.bn1(b.conv1(x)));
        y = ag::relu(b.bn2(b.conv2(y)));
        y = b.bn3(b.conv3(y));
        const ag::Var identity = b.has_downsample ? b.down_bn(b.down_conv(x)) : x;
        x = ag::relu(ag::add(y, identity));
      }
      taps.c[l + 1] = x;
    }
    return taps;
  }

  std::array<int, 5> tap_channels() const override { return {64, 256, 512, 1024, 2048}; }

 private:
  struct Bottleneck {
    Conv conv1, conv2, conv3, down_conv;
    Norm bn1, bn2, bn3, down_bn;
    bool has_downsample = false;
  };
  Conv conv1_;
  Norm bn1_;
  std::array<std::vector<Bottleneck>, 4> layers_;
};

// ---------------------------------------------------------------------------
// DenseNet-BC with growth rate 32 and bottleneck width 4 * growth.

class DenseNetBackbone final : public Backbone {
 public:
  static constexpr int kGrowth = 32;
  static constexpr int kBottleneck = 4;

  DenseNetBackbone(ParameterStore& store, Rng& rng, std::array<int, 4> blocks) {
    const std::string f = kPrefix + "features.";
    conv0_ = make_conv(store, f + "conv0", 3, 64, 7, 2, 3, false, Init::he, rng);
    norm0_ = make_norm(store, f + "norm0", 64, NormKind::frozen);
    int ch = 64;
    widths_[0] = 64;
    for (int b = 0; b < 4; ++b) {
      const std::string block = f + "denseblock" + std::to_string(b + 1);
      for (int l = 0; l < blocks[static_cast<std::size_t>(b)]; ++l) {
        const std::string name = block + ".denselayer" + std::to_string(l + 1);
        DenseLayer d;
        d.norm1 = make_norm(store, name + ".norm1", ch, NormKind::frozen);
        d.conv1 = make_conv(store, name + ".conv1", ch, kBottleneck * kGrowth, 1, 1, 0, false, Init::he, rng);
        d.norm2 = make_norm(store, name + ".norm2", kBottleneck * kGrowth, NormKind::frozen);
        d.conv2 = make_conv(store, name + ".conv2", kBottleneck * kGrowth, kGrowth, 3, 1, 1, false, Init::he, rng);
        blocks_[static_cast<std::size_t>(b)].push_back(d);
        ch += kGrowth;
      }
      widths_[static_cast<std::size_t>(b) + 1] = ch;
      if (b < 3) {
        const std::string name = f + "transition" + std::to_string(b + 1);
        Transition t;
        t.norm = make_norm(store, name + ".norm", ch, NormKind::frozen);
        t.conv = make_conv(store, name + ".conv", ch, ch / 2, 1, 1, 0, false, Init::he, rng);
        transitions_.push_back(t);
        ch /= 2;
      }
    }
    norm5_ = make_norm(store, f + "norm5", ch, NormKind::frozen);
  }

  BackboneTaps forward(const ag::Var& image) const override {
    BackboneTaps taps;
    ag::Var x = ag::relu(norm0_(conv0_(image)));
    taps.c[0] = x;
    x = ag::max_pool(x, 3, 2, 1);
    for (std::size_t b = 0; b < 4; ++b) {
      for (const DenseLayer& d : blocks_[b]) {
        ag::Var y = d.conv1(ag::relu(d.norm1(x)));
        y = d.conv2(ag::relu(d.norm2(y)));
        x = ag::concat({x, y});
      }
      if (b < 3) {
        taps.c[b + 1] = x;
        const Transition& t = transitions_[b];
        x = ag::avg_pool2x2(t.conv(ag::relu(t.norm(x))));
      } else {
        taps.c[4] = ag::relu(norm5_(x));
      }
    }
    return taps;
  }

  std::array<int, 5> tap_channels() const override { return widths_; }

 private:
  struct DenseLayer {
    Norm norm1, norm2;
    Conv conv1, conv2;
  };
  struct Transition {
    Norm norm;
    Conv conv;
  };
  Conv conv0_;
  Norm norm0_, norm5_;
  std::array<std::vector<DenseLayer>, 4> blocks_;
  std::vector<Transition> transitions_;
  std::array<int, 5> widths_{};
};

// ---------------------------------------------------------------------------
// VGG without batch norm. Five blocks at strides 1..16; C5 is the pooled last block.

class VggBackbone final : public Backbone {
 public:
  VggBackbone(ParameterStore& store, Rng& rng, int convs_in_deep_blocks) {
    const std::array<int, 5> widths = {64, 128, 256, 512, 512};
    const std::array<int, 5> counts = {2, 2, convs_in_deep_blocks, convs_in_deep_blocks, convs_in_deep_blocks};
    int index = 0;  // torchvision features.N numbering: conv, relu, ..., pool
    int in = 3;
    for (std::size_t b = 0; b < 5; ++b) {
      for (int i = 0; i < counts[b]; ++i) {
        blocks_[b].push_back(make_conv(store, kPrefix + "features." + std::to_string(index), in, widths[b], 3, 1, 1,
                                       true, Init::he, rng));
        index += 2;
        in = widths[b];
      }
      index += 1;
    }
  }

  BackboneTaps forward(const ag::Var& image) const override {
    BackboneTaps taps;
    ag::Var x = image;
    for (std::size_t b = 0; b < 5; ++b) {
      if (b > 0) x = ag::max_pool(x, 2, 2, 0);
      for (const Conv& c : blocks_[b]) x = ag::relu(c(x));
      if (b == 0)
        taps.c0 = x;
      else
        taps.c[b - 1] = x;
    }
    taps.c[4] = ag::max_pool(x, 2, 2, 0);
    return taps;
  }

  std::array<int, 5> tap_channels() const override { return {128, 256, 512, 512, 512}; }
  int l0_channels() const override { return 64; }

 private:
  std::array<std::vector<Conv>, 5> blocks_;
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(BackboneKind kind, ParameterStore& store, Rng& rng) {
  switch (kind) {
    case BackboneKind::toy: return std::make_unique<ToyBackbone>(store, rng);
    case BackboneKind::resnet101: return std::make_unique<ResNetBackbone>(store, rng, std::array<int, 4>{3, 4, 23, 3});
    case BackboneKind::resnet152: return std::make_unique<ResNetBackbone>(store, rng, std::array<int, 4>{3, 8, 36, 3});
    case BackboneKind::densenet121:
      return std::make_unique<DenseNetBackbone>(store, rng, std::array<int, 4>{6, 12, 24, 16});
    case BackboneKind::densenet169:
      return std::make_unique<DenseNetBackbone>(store, rng, std::array<int, 4>{6, 12, 32, 32});
    case BackboneKind::vgg16: return std::make_unique<VggBackbone>(store, rng, 3);
    case BackboneKind::vgg19: return std::make_unique<VggBackbone>(store, rng, 4);
  }
  throw ConfigError("unsupported backbone");
}

std::array<int, 5> backbone_tap_channels(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::toy: return ToyBackbone::kWidths;
    case BackboneKind::resnet101:
    case BackboneKind::resnet152: return {64, 256, 512, 1024, 2048};
    case BackboneKind::densenet121: return {64, 256, 512, 1024, 1024};
    case BackboneKind::densenet169: return {64, 256, 512, 1280, 1664};
    case BackboneKind::vgg16:
    case BackboneKind::vgg19: return {128, 256, 512, 512, 512};
  }
  throw ConfigError("unsupported backbone");
}

}  // namespace farnet
