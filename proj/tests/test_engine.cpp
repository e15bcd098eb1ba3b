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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include <opencv2/imgcodecs.hpp>

#include "farnet/config.hpp"
#include "farnet/engine.hpp"
#include "farnet/errors.hpp"

using namespace farnet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("farnet_engine_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

RunConfig tiny(const fs::path& dir) {
  RunConfig c;
  c.model.backbone = BackboneKind::toy;
  c.model.pretrained = false;
  c.model.k_landmarks = 2;
  c.model.schedule.up1_channels = 16;
  c.model.schedule.down_path_base = 16;
  c.model.schedule.up2_channels = {16, 16, 16, 32};
  c.model.schedule.fr_stem_channels = 8;
  c.model.schedule.head_mid_channels = 8;
  c.dataset.kind = DatasetKind::synthetic;
  c.dataset.k_landmarks = 2;
  c.dataset.input_size = {64, 64};
  c.dataset.synthetic_count = 2;
  c.dataset.synthetic_seed = 1;
  c.sigma = 4.0;
  c.epochs = 2;
  c.checkpoint_dir = dir.string();
  return c;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("checkpoints restore parameters exactly") {
  const fs::path dir = fresh_dir("ckpt");
  const RunConfig cfg = tiny(dir);
  const TrainResult r = train(cfg);
  CHECK(r.iterations == 4);
  REQUIRE(fs::exists(r.last_checkpoint));
  CHECK(fs::exists(dir / "run_config.json"));

  const LoadedCheckpoint ck = load_checkpoint(r.last_checkpoint);
  CHECK(ck.info.epoch == 2);
  CHECK(ck.info.iteration == 4);
  CHECK(ck.config.sigma == 4.0);
  for (const ParamEntry& e : r.net->params().entries())
    CHECK(same_bits(e.var->value, ck.net->params().find(e.name)->var->value));
  const auto first = r.net->params().entries().front().name;
  CHECK(ck.archive.find("adadelta/sq/" + first) != nullptr);

  const Tensor x = Tensor({3, 64, 64}, 0.3f);
  ag::NoGradGuard ng;
  CHECK(same_bits(r.net->forward(x).fine->value, ck.net->forward(x).fine->value));

  std::ofstream(dir / "junk.fnta") << "not an archive";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.fnta"), ResourceError);
}

TEST_CASE("an oracle predictor scores near zero") {
  DatasetSpec spec;
  spec.k_landmarks = 3;
  spec.input_size = {128, 96};
  std::vector<Sample> samples = generate_synthetic(5, 3, 3, {256, 192});
  const Predictor oracle = [&](const Tensor&, const Sample&, const PreparedInput& p) {
    HeatmapPrediction h;
    h.fine = encode_for_grid(p.landmarks_net, {128, 96, 1}, 3.0);
    h.coarse = encode_for_grid(p.landmarks_net, {64, 48, 2}, 3.0);
    return h;
  };
  const EvalReport r = evaluate_samples(samples, spec, oracle, InputScaling::unit);
  CHECK(r.images == 3);
  CHECK(r.mre_mm <= 0.5);
  CHECK(r.sdr.at(1.0) == 100.0);

  HeatmapPrediction coarse_only;
  const FrameTransform t = FrameTransform::between(Frame::original, {256, 192}, Frame::net_input, {128, 96});
  LandmarkSet net = map_coordinates(samples[0].landmarks_original, t);
  coarse_only.coarse = encode_for_grid(net, {64, 48, 2}, 3.0);
  const LandmarkSet back = decode_prediction(coarse_only, t, {});
  for (std::size_t i = 0; i < back.size(); ++i)
    CHECK(std::hypot(back.points[i].x - samples[0].landmarks_original.points[i].x,
                     back.points[i].y - samples[0].landmarks_original.points[i].y) < 2.0);

  const Predictor wrong_k = [&](const Tensor&, const Sample&, const PreparedInput&) {
    HeatmapPrediction h;
    h.fine = HeatmapStack(2, {128, 96, 1});
    return h;
  };
  CHECK_THROWS_AS(evaluate_samples(samples, spec, wrong_k, InputScaling::unit), ConfigError);
}

TEST_CASE("evaluate and predict from a checkpoint") {
  const fs::path dir = fresh_dir("eval");
  RunConfig cfg = tiny(dir);
  cfg.epochs = 1;
  const TrainResult r = train(cfg);

  const EvalReport rep = evaluate(r.last_checkpoint, cfg.dataset);
  CHECK(rep.images == 2);
  CHECK(std::isfinite(rep.mre_mm));
  DatasetSpec other = cfg.dataset;
  other.k_landmarks = 3;
  CHECK_THROWS_AS(evaluate(r.last_checkpoint, other), ConfigError);

  const Sample s = generate_synthetic(2, 1, 2, {96, 64})[0];
  cv::Mat img8;
  s.image.convertTo(img8, CV_8U, 255.0);
  cv::imwrite((dir / "probe.png").string(), img8);
  const PredictResult p = predict(r.last_checkpoint, dir / "probe.png", dir / "out");
  CHECK(p.landmarks.size() == 2);
  CHECK(p.landmarks.frame == Frame::original);
  REQUIRE(fs::exists(p.landmark_file));
  CHECK(read_landmark_file(p.landmark_file, Frame::original).size() == 2);
  const cv::Mat overlay = cv::imread(p.overlay_file.string());
  CHECK(overlay.cols == 96);
  CHECK(overlay.rows == 64);
  CHECK(overlay.channels() == 3);
  CHECK_THROWS_AS(predict(r.last_checkpoint, dir / "missing.png", dir / "out"), IoError);
}

TEST_CASE("a few steps reduce the training loss") {
  const fs::path dir = fresh_dir("fit");
  RunConfig cfg = tiny(dir);
  cfg.optimizer.lr = 1.0;
  cfg.epochs = 10;
  TrainOptions opts;
  opts.write_checkpoints = false;
  long long seen = 0;
  opts.on_iteration = [&](const IterationLog& l) { seen = l.iteration; };
  const TrainResult r = train(cfg, opts);
  CHECK(seen == 20);
  REQUIRE(r.epoch_losses.size() == 10);
  CHECK(r.epoch_losses.back() < 0.5 * r.epoch_losses.front());
  CHECK_FALSE(fs::exists(dir / "last.fnta"));
}

TEST_CASE("batches accumulate gradients and cap iterations") {
  const fs::path dir = fresh_dir("batch");
  RunConfig cfg = tiny(dir);
  cfg.batch_size = 2;
  cfg.epochs = 3;
  cfg.max_iterations = 2;
  TrainOptions opts;
  opts.write_checkpoints = false;
  const TrainResult r = train(cfg, opts);
  CHECK(r.iterations == 2);
  CHECK(r.iteration_losses.size() == 2);
}

TEST_CASE("validation tracks the best checkpoint") {
  const fs::path dir = fresh_dir("val");
  RunConfig cfg = tiny(dir);
  cfg.validation_split = "val";
  const TrainResult r = train(cfg);
  CHECK(r.validation_mre.size() == 2);
  REQUIRE(r.best_metric);
  CHECK(fs::exists(r.best_checkpoint));
  CHECK(*r.best_metric == std::min(r.validation_mre[0], r.validation_mre[1]));
}

TEST_CASE("non-finite losses abort with a dump") {
  const fs::path dir = fresh_dir("nan");
  const RunConfig cfg = tiny(dir);
  std::vector<Sample> samples = generate_synthetic(1, 2, 2, {64, 64});
  samples[1].image.at<float>(3, 3) = std::numeric_limits<float>::quiet_NaN();
  TrainOptions opts;
  opts.train_samples = samples;
  CHECK_THROWS_AS(train(cfg, opts), NumericError);
  bool dumped = false;
  for (const auto& e : fs::directory_iterator(dir)) dumped = dumped || e.path().filename().string().rfind("nonfinite_", 0) == 0;
  CHECK(dumped);
}

TEST_CASE("run configs round trip through json") {
  const fs::path dir = fresh_dir("cfg");
  RunConfig cfg = tiny(dir);
  cfg.loss.kind = LossKind::l2;
  cfg.model.fusion = Fusion::add;
  cfg.dataset.augmentation.enabled = true;
  cfg.dataset.augmentation.scale_lo = 0.9;
  save_run_config(dir / "c.json", cfg);
  const RunConfig back = load_run_config(dir / "c.json");
  CHECK(to_json(back) == to_json(cfg));

  nlohmann::json j = to_json(cfg);
  j["model"]["fusoin"] = "add";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = to_json(cfg);
  j["loss"]["kind"] = "focal";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = to_json(cfg);
  j["dataset"]["input_size"] = {100, 64};
  CHECK_THROWS_AS(run_config_from_json(j).validate(), ConfigError);

  RunConfig mismatch = cfg;
  mismatch.dataset.k_landmarks = 3;
  CHECK_THROWS_AS(mismatch.validate(), ConfigError);

  std::ofstream(dir / "bad.json") << "{ \"epochs\": ";
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
}
