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

#include "farnet/config.hpp"

#include <exception>
#include <fstream>
#include <set>

#include "farnet/errors.hpp"

namespace farnet {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string where(const char* key) const { return where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json schedule_json(const ChannelSchedule& s) {
  return {{"up1_channels", s.up1_channels},         {"down_path_base", s.down_path_base},
          {"up2_channels", s.up2_channels},         {"fr_stem_channels", s.fr_stem_channels},
          {"head_mid_channels", s.head_mid_channels}, {"down_keeps_doubled", s.down_keeps_doubled}};
}

ChannelSchedule schedule_from(const json& j, const std::string& where) {
  ChannelSchedule s;
  Reader r(j, where);
  r.get("up1_channels", s.up1_channels);
  r.get("down_path_base", s.down_path_base);
  r.get("up2_channels", s.up2_channels);
  r.get("fr_stem_channels", s.fr_stem_channels);
  r.get("head_mid_channels", s.head_mid_channels);
  r.get("down_keeps_doubled", s.down_keeps_doubled);
  return s;
}

json augment_json(const AugmentConfig& a) {
  return {{"enabled", a.enabled},
          {"max_translate_frac", a.max_translate_frac},
          {"max_rotate_deg", a.max_rotate_deg},
          {"scale_range", {a.scale_lo, a.scale_hi}},
          {"intensity_jitter", a.intensity_jitter},
          {"seed", a.seed}};
}

AugmentConfig augment_from(const json& j, const std::string& where) {
  AugmentConfig a;
  Reader r(j, where);
  r.get("enabled", a.enabled);
  r.get("max_translate_frac", a.max_translate_frac);
  r.get("max_rotate_deg", a.max_rotate_deg);
  std::array<double, 2> range{a.scale_lo, a.scale_hi};
  r.get("scale_range", range);
  a.scale_lo = range[0];
  a.scale_hi = range[1];
  r.get("intensity_jitter", a.intensity_jitter);
  r.get("seed", a.seed);
  return a;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"backbone", to_string(c.backbone)},
          {"k_landmarks", c.k_landmarks},
          {"fusion", to_string(c.fusion)},
          {"refinement", to_string(c.refinement)},
          {"schedule", schedule_json(c.schedule)},
          {"pretrained", c.pretrained},
          {"weights_path", c.weights_path},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  Reader r(j, "model");
  std::string backbone = to_string(c.backbone), fusion = to_string(c.fusion), refinement = to_string(c.refinement);
  r.get("backbone", backbone);
  r.get("fusion", fusion);
  r.get("refinement", refinement);
  c.backbone = backbone_from_string(backbone);
  c.fusion = fusion_from_string(fusion);
  c.refinement = refinement_from_string(refinement);
  r.get("k_landmarks", c.k_landmarks);
  if (const json* s = r.sub("schedule")) c.schedule = schedule_from(*s, "model.schedule");
  r.get("pretrained", c.pretrained);
  r.get("weights_path", c.weights_path);
  r.get("seed", c.seed);
  return c;
}

json to_json(const DatasetSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"root_path", s.root_path},
          {"split", s.split},
          {"fold", s.fold},
          {"input_size", {s.input_size.width, s.input_size.height}},
          {"k_landmarks", s.k_landmarks},
          {"augmentation", augment_json(s.augmentation)},
          {"mm_per_px", s.mm_per_px},
          {"annotator_dirs", s.annotator_dirs},
          {"wrist_landmarks", s.wrist_landmarks},
          {"nominal_wrist_mm", s.nominal_wrist_mm},
          {"split_seed", s.split_seed},
          {"spine_test_count", s.spine_test_count},
          {"spine_val_count", s.spine_val_count},
          {"synthetic_count", s.synthetic_count},
          {"synthetic_seed", s.synthetic_seed},
          {"sdr_radii", s.sdr_radii}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  Reader r(j, "dataset");
  std::string kind = to_string(s.kind);
  r.get("kind", kind);
  s.kind = dataset_kind_from_string(kind);
  r.get("root_path", s.root_path);
  r.get("split", s.split);
  r.get("fold", s.fold);
  std::array<int, 2> size{s.input_size.width, s.input_size.height};
  r.get("input_size", size);
  s.input_size = {size[0], size[1]};
  r.get("k_landmarks", s.k_landmarks);
  if (const json* a = r.sub("augmentation")) s.augmentation = augment_from(*a, "dataset.augmentation");
  r.get("mm_per_px", s.mm_per_px);
  r.get("annotator_dirs", s.annotator_dirs);
  r.get("wrist_landmarks", s.wrist_landmarks);
  r.get("nominal_wrist_mm", s.nominal_wrist_mm);
  r.get("split_seed", s.split_seed);
  r.get("spine_test_count", s.spine_test_count);
  r.get("spine_val_count", s.spine_val_count);
  r.get("synthetic_count", s.synthetic_count);
  r.get("synthetic_seed", s.synthetic_seed);
  r.get("sdr_radii", s.sdr_radii);
  return s;
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"loss",
           {{"alpha", c.loss.alpha},
            {"w_coarse", c.loss.w_coarse},
            {"w_fine", c.loss.w_fine},
            {"kind", c.loss.kind == LossKind::ewc ? "ewc" : "l2"}}},
          {"dataset", to_json(c.dataset)},
          {"optimizer", {{"kind", c.optimizer.kind}, {"lr", c.optimizer.lr}, {"rho", c.optimizer.rho}, {"eps", c.optimizer.eps}}},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"sigma", c.sigma},
          {"seed", c.seed},
          {"checkpoint_dir", c.checkpoint_dir},
          {"deterministic", c.deterministic},
          {"max_iterations", c.max_iterations},
          {"checkpoint_every", c.checkpoint_every},
          {"threads", c.threads},
          {"validation_split", c.validation_split},
          {"validate_every", c.validate_every},
          {"decode", {{"refine", c.decode.refine}, {"confidence_floor", c.decode.confidence_floor}}}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  {
    Reader r(j, "config");
    if (const json* m = r.sub("model")) c.model = model_config_from_json(*m);
    if (const json* l = r.sub("loss")) {
      Reader lr(*l, "loss");
      lr.get("alpha", c.loss.alpha);
      lr.get("w_coarse", c.loss.w_coarse);
      lr.get("w_fine", c.loss.w_fine);
      std::string kind = "ewc";
      lr.get("kind", kind);
      if (kind != "ewc" && kind != "l2") throw ConfigError("loss.kind must be ewc or l2");
      c.loss.kind = kind == "ewc" ? LossKind::ewc : LossKind::l2;
    }
    if (const json* d = r.sub("dataset")) c.dataset = dataset_spec_from_json(*d);
    if (const json* o = r.sub("optimizer")) {
      Reader orr(*o, "optimizer");
      orr.get("kind", c.optimizer.kind);
      orr.get("lr", c.optimizer.lr);
      orr.get("rho", c.optimizer.rho);
      orr.get("eps", c.optimizer.eps);
    }
    r.get("epochs", c.epochs);
    r.get("batch_size", c.batch_size);
    r.get("sigma", c.sigma);
    r.get("seed", c.seed);
    r.get("checkpoint_dir", c.checkpoint_dir);
    r.get("deterministic", c.deterministic);
    r.get("max_iterations", c.max_iterations);
    r.get("checkpoint_every", c.checkpoint_every);
    r.get("threads", c.threads);
    r.get("validation_split", c.validation_split);
    r.get("validate_every", c.validate_every);
    if (const json* d = r.sub("decode")) {
      Reader dr(*d, "decode");
      dr.get("refine", c.decode.refine);
      dr.get("confidence_floor", c.decode.confidence_floor);
    }
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (optimizer.kind != "adadelta") throw ConfigError("optimizer.kind must be adadelta");
  optimizer.adadelta().validate();
  if (max_iterations < 0 || checkpoint_every < 0 || threads < 0 || validate_every < 0)
    throw ConfigError("max_iterations, checkpoint_every, threads and validate_every must be non-negative");
  if (!(decode.confidence_floor >= 0.0)) throw ConfigError("decode.confidence_floor must be non-negative");
  model.validate();
  loss.validate();
  dataset.validate();
  if (dataset.k_landmarks != model.k_landmarks)
    throw ConfigError("dataset.k_landmarks (" + std::to_string(dataset.k_landmarks) + ") differs from model.k_landmarks (" +
                      std::to_string(model.k_landmarks) + ")");
  if (checkpoint_dir.empty()) throw ConfigError("checkpoint_dir is empty");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  out << to_json(config).dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace farnet
