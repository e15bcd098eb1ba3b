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

#include "farnet/model.hpp"

#include "farnet/archive.hpp"
#include "farnet/errors.hpp"

namespace farnet {

std::string to_string(Fusion f) { return f == Fusion::concat ? "concat" : "add"; }

std::string to_string(Refinement r) {
  switch (r) {
    case Refinement::guided: return "guided";
    case Refinement::naive: return "naive";
    case Refinement::none: return "none";
  }
  return "unknown";
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "concat") return Fusion::concat;
  if (s == "add") return Fusion::add;
  throw ConfigError("unknown fusion '" + s + "' (expected concat or add)");
}

Refinement refinement_from_string(const std::string& s) {
  if (s == "guided") return Refinement::guided;
  if (s == "naive") return Refinement::naive;
  if (s == "none") return Refinement::none;
  throw ConfigError("unknown refinement '" + s + "' (expected guided, naive or none)");
}

void ChannelSchedule::validate() const {
  bool ok = up1_channels > 0 && down_path_base > 0 && fr_stem_channels > 0 && head_mid_channels > 0;
  for (int c : up2_channels) ok = ok && c > 0;
  if (!ok) throw ConfigError("channel schedule widths must be positive");
}

void ModelConfig::validate() const {
  if (k_landmarks < 1) throw ConfigError("k_landmarks must be >= 1");
  if (backbone == BackboneKind::toy && pretrained) throw ConfigError("the toy backbone has no pretrained weights");
  schedule.validate();
}

namespace {

std::string shape_of(const ag::Var& v) { return v->value.shape_string(); }

void require_half(const ag::Var& coarse, const ag::Var& fine, const char* what) {
  const Tensor& c = coarse->value;
  const Tensor& f = fine->value;
  if (c.height() * 2 != f.height() || c.width() * 2 != f.width())
    throw ShapeError(std::string(what) + ": " + shape_of(coarse) + " is not half of " + shape_of(fine));
}

template <class Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

UpFuseBlock::UpFuseBlock(ParameterStore& store, const std::string& name, int coarse_c, int lateral_c, int out_c,
                         Fusion fusion, Rng& rng)
    : fusion_(fusion), out_c_(out_c) {
  if (fusion == Fusion::concat) {
    fuse_ = make_unit(store, name + ".fuse", coarse_c + lateral_c, out_c, 1, 1, rng);
  } else {
    match_coarse_ = make_unit(store, name + ".match_coarse", coarse_c, out_c, 1, 1, rng);
    match_lateral_ = make_unit(store, name + ".match_lateral", lateral_c, out_c, 1, 1, rng);
    fuse_ = make_unit(store, name + ".fuse", out_c, out_c, 3, 1, rng);
  }
}

ag::Var UpFuseBlock::operator()(const ag::Var& coarse, const ag::Var& lateral) const {
  require_half(coarse, lateral, "up-fuse block");
  if (fusion_ == Fusion::concat) return fuse_(ag::concat({ag::upsample2x(coarse), lateral}));
  return fuse_(ag::add(ag::upsample2x(match_coarse_(coarse)), match_lateral_(lateral)));
}

DownFuseBlock::DownFuseBlock(ParameterStore& store, const std::string& name, int fine_c, int lateral_c,
                             Fusion fusion, bool keep_doubled, Rng& rng)
    : fusion_(fusion), out_c_(keep_doubled ? 2 * fine_c : fine_c) {
  down_ = make_unit(store, name + ".down", fine_c, 2 * fine_c, 3, 2, rng);
  if (fusion == Fusion::concat) {
    fuse_ = make_unit(store, name + ".fuse", 2 * fine_c + lateral_c, out_c_, 1, 1, rng);
  } else {
    match_lateral_ = make_unit(store, name + ".match_lateral", lateral_c, 2 * fine_c, 1, 1, rng);
    fuse_ = make_unit(store, name + ".fuse", 2 * fine_c, out_c_, 3, 1, rng);
  }
}

ag::Var DownFuseBlock::operator()(const ag::Var& fine, const ag::Var& lateral) const {
  if (fine->value.height() % 2 != 0 || fine->value.width() % 2 != 0)
    throw ShapeError("down-fuse block: odd input " + shape_of(fine));
  require_half(lateral, fine, "down-fuse block");
  const ag::Var down = down_(fine);
  if (fusion_ == Fusion::concat) return fuse_(ag::concat({down, lateral}));
  return fuse_(ag::add(down, match_lateral_(lateral)));
}

FarNet::FarNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  backbone_ = make_backbone(config_.backbone, store_, rng);

  const ChannelSchedule& s = config_.schedule;
  const auto taps = backbone_->tap_channels();
  const int k = config_.k_landmarks;

  p5_a_ = make_unit(store_, "msfa.p5.0", taps[4], s.up1_channels, 3, 1, rng);
  p5_b_ = make_unit(store_, "msfa.p5.1", s.up1_channels, s.up1_channels, 1, 1, rng);
  for (int level = 4; level >= 2; --level)
    up1_.emplace_back(store_, "msfa.up1.l" + std::to_string(level), s.up1_channels,
                      taps[static_cast<std::size_t>(level - 1)], s.up1_channels, config_.fusion, rng);

  // N2 is P2, projected when the down path starts at a different width.
  std::array<int, 6> n_width{};  // index = level
  n_width[2] = s.down_path_base;
  if (s.down_path_base != s.up1_channels)
    p2_project_ = make_unit(store_, "msfa.down.project", s.up1_channels, s.down_path_base, 1, 1, rng);
  for (int level = 3; level <= 5; ++level) {
    down_.emplace_back(store_, "msfa.down.l" + std::to_string(level), n_width[static_cast<std::size_t>(level - 1)],
                       s.up1_channels, config_.fusion, s.down_keeps_doubled, rng);
    n_width[static_cast<std::size_t>(level)] = down_.back().out_channels();
  }

  int coarse_c = n_width[5];
  for (int i = 0; i < 4; ++i) {
    const int level = 4 - i;
    const int lateral_c = level >= 2 ? n_width[static_cast<std::size_t>(level)] : taps[0];
    up2_.emplace_back(store_, "msfa.up2.l" + std::to_string(level), coarse_c, lateral_c,
                      s.up2_channels[static_cast<std::size_t>(i)], config_.fusion, rng);
    coarse_c = up2_.back().out_channels();
  }

  coarse_mid_ = make_unit(store_, "msfa.head.0", coarse_c, s.head_mid_channels, 3, 1, rng);
  coarse_out_ = make_conv(store_, "msfa.head.1", s.head_mid_channels, k, 1, 1, 0, true, Init::small, rng);

  if (config_.refinement != Refinement::none) {
    if (backbone_->l0_channels() == 0) fr_stem_ = make_unit(store_, "fr.stem", 3, s.fr_stem_channels, 3, 1, rng);
    fine_mid_ = make_unit(store_, "fr.head.0", fr_concat_channels(), s.head_mid_channels, 3, 1, rng);
    fine_out_ = make_conv(store_, "fr.head.1", s.head_mid_channels, k, 1, 1, 0, true, Init::small, rng);
  }

  if (config_.pretrained) {
    if (config_.weights_path.empty()) throw ResourceError("pretrained backbone requested but no weights_path given");
    load_backbone_weights(config_.weights_path);
  }
}

int FarNet::fr_concat_channels() const {
  const int stem = backbone_->l0_channels() > 0 ? backbone_->l0_channels() : config_.schedule.fr_stem_channels;
  const int guide = config_.refinement == Refinement::guided ? config_.k_landmarks : 0;
  return stem + config_.schedule.up2_channels[3] + guide;
}

BackboneTaps FarNet::extract_backbone_taps(const ag::Var& image) const {
  const Tensor& x = image->value;
  if (x.rank() != 3 || x.channels() != 3) throw ShapeError("backbone expects a 3 x H x W image, got " + shape_of(image));
  if (x.height() % 32 != 0 || x.width() % 32 != 0)
    throw ShapeError("input " + std::to_string(x.width()) + "x" + std::to_string(x.height()) +
                     " is not divisible by 32");
  return in_stage("backbone", [&] { return backbone_->forward(image); });
}

MsfaOutput FarNet::msfa_forward(const BackboneTaps& taps) const {
  return in_stage("msfa", [&] {
    MsfaOutput out;
    auto record = [&](const char* name, const ag::Var& v) { out.trace.emplace_back(name, v->value.dims()); };

    std::array<ag::Var, 6> p;  // first up path, index = level
    p[5] = p5_b_(p5_a_(taps.c[4]));
    record("P5", p[5]);
    for (int level = 4; level >= 2; --level) {
      const auto l = static_cast<std::size_t>(level);
      p[l] = up1_[static_cast<std::size_t>(4 - level)](p[l + 1], taps.c[l - 1]);
      record(level == 4 ? "P4" : level == 3 ? "P3" : "P2", p[l]);
    }

    std::array<ag::Var, 6> n;  // down path
    n[2] = p2_project_.conv.weight ? p2_project_(p[2]) : p[2];
    for (int level = 3; level <= 5; ++level) {
      const auto l = static_cast<std::size_t>(level);
      n[l] = down_[static_cast<std::size_t>(level - 3)](n[l - 1], p[l]);
      record(level == 3 ? "N3" : level == 4 ? "N4" : "N5", n[l]);
    }

    ag::Var q = n[5];  // second up path
    for (int i = 0; i < 4; ++i) {
      const int level = 4 - i;
      const ag::Var& lateral = level >= 2 ? n[static_cast<std::size_t>(level)] : taps.c[0];
      q = up2_[static_cast<std::size_t>(i)](q, lateral);
      static constexpr const char* kNames[] = {"Q4", "Q3", "Q2", "Q1"};
      record(kNames[i], q);
    }

    out.features_l1 = q;
    out.coarse = coarse_out_(coarse_mid_(q));
    return out;
  });
}

ag::Var FarNet::fr_forward(const ag::Var& image, const BackboneTaps& taps, const ag::Var& features_l1,
                           const ag::Var& coarse) const {
  if (config_.refinement == Refinement::none) throw ConfigError("refinement module is disabled in this model");
  return in_stage("fr", [&] {
    require_half(features_l1, image, "refinement features");
    require_half(coarse, image, "refinement heatmaps");
    const ag::Var stem = backbone_->l0_channels() > 0 ? taps.c0 : fr_stem_(image);
    std::vector<ag::Var> parts{stem, ag::upsample2x(features_l1)};
    if (config_.refinement == Refinement::guided) parts.push_back(ag::upsample2x(coarse));
    return fine_out_(fine_mid_(ag::concat(parts)));
  });
}

ForwardOutput FarNet::forward(const ag::Var& image) const {
  const BackboneTaps taps = extract_backbone_taps(image);
  const MsfaOutput m = msfa_forward(taps);
  ForwardOutput out;
  out.coarse = m.coarse;
  if (config_.refinement != Refinement::none) out.fine = fr_forward(image, taps, m.features_l1, m.coarse);
  return out;
}

void FarNet::load_backbone_weights(const std::filesystem::path& path) {
  const TensorArchive archive = read_archive(path);
  const std::string prefix = "backbone.";
  std::size_t loaded = 0;
  for (const ParamEntry& e : store_.entries()) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    const std::string key = e.name.substr(prefix.size());
    const Tensor* t = archive.find(key);
    if (t == nullptr) t = archive.find(e.name);
    if (t == nullptr) throw ResourceError(path.string() + " has no entry for " + key);
    if (!t->same_shape(e.var->value))
      throw ResourceError(path.string() + ": " + key + " is " + t->shape_string() + ", expected " +
                          e.var->value.shape_string());
    e.var->value = *t;
    ++loaded;
  }
  if (loaded == 0) throw ResourceError(path.string() + " provided no backbone parameters");
}

}  // namespace farnet
