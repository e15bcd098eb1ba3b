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

#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "farnet/archive.hpp"
#include "farnet/errors.hpp"
#include "farnet/model.hpp"
#include "test_util.hpp"

using namespace farnet;
using farnet::testing::random_tensor;

namespace {

ModelConfig toy(int k, Fusion fusion = Fusion::concat, Refinement refinement = Refinement::guided) {
  ModelConfig c;
  c.backbone = BackboneKind::toy;
  c.pretrained = false;
  c.k_landmarks = k;
  c.fusion = fusion;
  c.refinement = refinement;
  c.schedule.up1_channels = 32;
  c.schedule.down_path_base = 32;
  c.schedule.up2_channels = {32, 32, 32, 64};
  c.schedule.head_mid_channels = 16;
  c.seed = 3;
  return c;
}

std::vector<int> dims(const ag::Var& v) { return v->value.dims(); }

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("heads have the expected resolutions") {
  for (auto [w, h] : {std::pair{64, 64}, std::pair{96, 64}, std::pair{64, 128}}) {
    FarNet net(toy(5));
    const ForwardOutput out = net.forward(random_tensor({3, h, w}, 1, -1, 1));
    CHECK(dims(out.coarse) == std::vector<int>{5, h / 2, w / 2});
    REQUIRE(out.fine);
    CHECK(dims(out.fine) == std::vector<int>{5, h, w});
  }
  FarNet coarse_only(toy(3, Fusion::concat, Refinement::none));
  const ForwardOutput out = coarse_only.forward(random_tensor({3, 64, 64}, 1, -1, 1));
  CHECK_FALSE(out.fine);
  CHECK(coarse_only.params().find("fr.head.1.conv.weight") == nullptr);
}

TEST_CASE("msfa trace visits every level in order") {
  for (Fusion f : {Fusion::concat, Fusion::add}) {
    FarNet net(toy(2, f));
    const BackboneTaps taps = net.extract_backbone_taps(ag::constant(random_tensor({3, 64, 128}, 2, -1, 1)));
    const MsfaOutput m = net.msfa_forward(taps);
    const std::vector<std::pair<std::string, int>> expected = {{"P5", 32}, {"P4", 16}, {"P3", 8}, {"P2", 4},
                                                               {"N3", 8},  {"N4", 16}, {"N5", 32}, {"Q4", 16},
                                                               {"Q3", 8},  {"Q2", 4},  {"Q1", 2}};
    REQUIRE(m.trace.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(m.trace[i].first == expected[i].first);
      CHECK(m.trace[i].second[1] == 64 / expected[i].second);
      CHECK(m.trace[i].second[2] == 128 / expected[i].second);
    }
    CHECK(m.trace.back().second[0] == 64);
    CHECK(dims(m.features_l1) == std::vector<int>{64, 32, 64});
  }
}

TEST_CASE("inputs must be three-channel and divisible by 32") {
  FarNet net(toy(2));
  CHECK_THROWS_AS(net.forward(random_tensor({3, 48, 64}, 1, 0, 1)), ShapeError);
  CHECK_THROWS_AS(net.forward(random_tensor({1, 64, 64}, 1, 0, 1)), ShapeError);
  try {
    net.forward(random_tensor({3, 64, 70}, 1, 0, 1));
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("70") != std::string::npos);
  }
}

TEST_CASE("refinement input width") {
  CHECK(FarNet(toy(4, Fusion::concat, Refinement::naive)).fr_concat_channels() == 32 + 64);
  CHECK(FarNet(toy(4, Fusion::concat, Refinement::guided)).fr_concat_channels() == 32 + 64 + 4);
  CHECK(FarNet(toy(19, Fusion::add, Refinement::guided)).fr_concat_channels() == 32 + 64 + 19);
}

TEST_CASE("add fusion registers channel matching units") {
  FarNet add(toy(2, Fusion::add));
  FarNet cat(toy(2, Fusion::concat));
  CHECK(add.params().find("msfa.up1.l4.match_coarse.conv.weight") != nullptr);
  CHECK(cat.params().find("msfa.up1.l4.match_coarse.conv.weight") == nullptr);
  const ForwardOutput out = add.forward(random_tensor({3, 64, 64}, 4, -1, 1));
  CHECK(dims(out.fine) == std::vector<int>{2, 64, 64});
}

TEST_CASE("initialization is seeded") {
  FarNet a(toy(2)), b(toy(2));
  ModelConfig other = toy(2);
  other.seed = 4;
  FarNet c(other);
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const Tensor& ta = a.params().entries()[i].var->value;
    all_equal = all_equal && same_bits(ta, b.params().entries()[i].var->value);
    any_diff = any_diff || !same_bits(ta, c.params().entries()[i].var->value);
  }
  CHECK(all_equal);
  CHECK(any_diff);
  const Tensor x = random_tensor({3, 64, 64}, 9, -1, 1);
  CHECK(same_bits(a.forward(x).fine->value, b.forward(x).fine->value));
}

TEST_CASE("configuration validation") {
  ModelConfig c = toy(2);
  c.pretrained = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy(0);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ModelConfig d;
  d.pretrained = true;
  d.weights_path = "";
  CHECK_THROWS_AS(FarNet{d}, ResourceError);
  CHECK(fusion_from_string(to_string(Fusion::add)) == Fusion::add);
  CHECK(refinement_from_string(to_string(Refinement::naive)) == Refinement::naive);
  CHECK_THROWS_AS(refinement_from_string("bogus"), ConfigError);
}

TEST_CASE("backbone weights load from an archive") {
  FarNet src(toy(2));
  ModelConfig other = toy(2);
  other.seed = 11;
  FarNet dst(other);

  TensorArchive archive;
  for (const ParamEntry& e : src.params().entries())
    if (e.name.rfind("backbone.", 0) == 0) archive.add(e.name.substr(9), e.var->value);
  REQUIRE_FALSE(archive.tensors.empty());
  const auto path = std::filesystem::temp_directory_path() / "farnet_model_test.fnta";
  write_archive(path, archive);
  dst.load_backbone_weights(path);
  for (const ParamEntry& e : dst.params().entries()) {
    const Tensor& s = src.params().find(e.name)->var->value;
    if (e.name.rfind("backbone.", 0) == 0)
      CHECK(same_bits(e.var->value, s));
  }

  archive.tensors.front().second = Tensor({1, 1, 1, 1});
  write_archive(path, archive);
  CHECK_THROWS_AS(dst.load_backbone_weights(path), ResourceError);
  CHECK_THROWS_AS(dst.load_backbone_weights(path.string() + ".missing"), ResourceError);
}

TEST_CASE("vgg exposes a full-resolution tap to the refinement stem") {
  ModelConfig c;
  c.backbone = BackboneKind::vgg16;
  c.pretrained = false;
  c.k_landmarks = 3;
  FarNet net(c);
  CHECK(net.backbone().l0_channels() == 64);
  CHECK(net.fr_concat_channels() == 64 + 64 + 3);
  CHECK(net.params().find("fr.stem.conv.weight") == nullptr);
  const ForwardOutput out = net.forward(random_tensor({3, 64, 64}, 5, -1, 1));
  CHECK(dims(out.fine) == std::vector<int>{3, 64, 64});
}

TEST_CASE("fusion block shapes") {
  ParameterStore store;
  Rng rng(1);
  for (Fusion f : {Fusion::concat, Fusion::add}) {
    const std::string tag = f == Fusion::add ? "add" : "cat";
    const UpFuseBlock up(store, "up." + tag, 24, 16, 128, f, rng);
    const ag::Var u = up(ag::constant(random_tensor({24, 16, 16}, 1, -1, 1)),
                         ag::constant(random_tensor({16, 32, 32}, 2, -1, 1)));
    CHECK(dims(u) == std::vector<int>{128, 32, 32});
    CHECK_THROWS_AS(up(ag::constant(random_tensor({24, 16, 16}, 1, -1, 1)),
                       ag::constant(random_tensor({16, 31, 32}, 2, -1, 1))),
                    ShapeError);

    const DownFuseBlock down(store, "down." + tag, 128, 40, f, true, rng);
    CHECK(down.out_channels() == 256);
    const ag::Var d = down(ag::constant(random_tensor({128, 32, 32}, 3, -1, 1)),
                           ag::constant(random_tensor({40, 16, 16}, 4, -1, 1)));
    CHECK(dims(d) == std::vector<int>{256, 16, 16});
    CHECK_THROWS_AS(down(ag::constant(random_tensor({128, 33, 32}, 3, -1, 1)),
                         ag::constant(random_tensor({40, 16, 16}, 4, -1, 1))),
                    ShapeError);
    const DownFuseBlock narrow(store, "narrow." + tag, 128, 40, f, false, rng);
    CHECK(narrow.out_channels() == 128);
  }
}

TEST_CASE("backbone taps follow stride arithmetic") {
  FarNet net(toy(2));
  const BackboneTaps t = net.extract_backbone_taps(ag::constant(random_tensor({3, 128, 96}, 1, -1, 1)));
  for (int i = 0; i < 5; ++i) {
    CHECK(t.c[static_cast<std::size_t>(i)]->value.height() == 128 >> (i + 1));
    CHECK(t.c[static_cast<std::size_t>(i)]->value.width() == 96 >> (i + 1));
  }
  CHECK_THROWS_AS(net.extract_backbone_taps(ag::constant(random_tensor({3, 500, 640}, 1, 0, 1))), ShapeError);
}

TEST_CASE("guided refinement width grows with K") {
  ModelConfig c;
  c.backbone = BackboneKind::toy;
  c.pretrained = false;
  c.k_landmarks = 68;
  CHECK(FarNet(c).fr_concat_channels() == 164);
  c.refinement = Refinement::naive;
  CHECK(FarNet(c).fr_concat_channels() == 96);
}
