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

// Training, evaluation, prediction and checkpoints.
//
// A checkpoint is a tensor archive (see archive.hpp) with
//   meta.kind        "farnet-checkpoint"
//   meta.config      the RunConfig as JSON
//   meta.epoch, meta.iteration, meta.best_metric (null when unset)
//   tensors          "param/<name>" per trainable parameter, "buffer/<name>" per
//                    buffer, "adadelta/sq/<name>" and "adadelta/acc/<name>" per
//                    trainable parameter

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "farnet/config.hpp"
#include "farnet/data.hpp"
#include "farnet/losses.hpp"
#include "farnet/metrics.hpp"
#include "farnet/model.hpp"
#include "farnet/optimizer.hpp"

namespace farnet {

InputScaling input_scaling(const FarNet& net);

/// Runs forward and backward for one prepared sample, adding parameter
/// gradients into the store. Returns the loss of this sample.
LossBreakdown accumulate_gradients(const FarNet& net, const PreparedInput& input, double sigma,
                                   const LossConfig& loss);

struct CheckpointInfo {
  int epoch = 0;
  long long iteration = 0;
  std::optional<double> best_metric;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const FarNet& net,
                     const Adadelta* optimizer, const CheckpointInfo& info);

struct LoadedCheckpoint {
  RunConfig config;
  std::unique_ptr<FarNet> net;
  CheckpointInfo info;
  TensorArchive archive;  // raw contents, for restoring optimizer state
};

/// Rebuilds the network from the stored config (without reading pretrained
/// weights) and restores every parameter and buffer.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

struct IterationLog {
  long long iteration = 0;
  int epoch = 0;
  LossBreakdown loss;  // mean over the batch
};

struct TrainOptions {
  std::function<void(const IterationLog&)> on_iteration;
  /// Overrides dataset loading (used by tests and the self-test).
  std::optional<std::vector<Sample>> train_samples;
  std::optional<std::vector<Sample>> validation_samples;
  bool write_checkpoints = true;
};

struct TrainResult {
  std::vector<LossBreakdown> iteration_losses;
  std::vector<double> epoch_losses;
  std::vector<double> validation_mre;
  std::optional<double> best_metric;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  long long iterations = 0;
  std::unique_ptr<FarNet> net;
};

/// Throws NumericError on a non-finite loss after writing
/// "<checkpoint_dir>/nonfinite_<iteration>.txt" naming the offending samples.
TrainResult train(const RunConfig& config, TrainOptions options = {});

/// Heatmaps for one network-input image.
struct HeatmapPrediction {
  std::optional<HeatmapStack> coarse;  // stride 2
  std::optional<HeatmapStack> fine;    // stride 1
};
using Predictor = std::function<HeatmapPrediction(const Tensor& image, const Sample& sample,
                                                  const PreparedInput& prepared)>;

Predictor model_predictor(const FarNet& net);

/// Decodes the fine heatmaps (coarse when fine is absent) and maps the result
/// back to `to_net.src_frame`.
LandmarkSet decode_prediction(const HeatmapPrediction& prediction, const FrameTransform& to_net,
                              const DecodeOptions& options);

EvalReport evaluate_samples(const std::vector<Sample>& samples, const DatasetSpec& spec, const Predictor& predictor,
                            InputScaling scaling, const DecodeOptions& decode = {});
/// Loads the checkpoint, checks K against the dataset (ConfigError) and scores it.
EvalReport evaluate(const std::filesystem::path& checkpoint, const DatasetSpec& spec);

struct PredictResult {
  LandmarkSet landmarks;  // original frame, with confidences and low-confidence flags
  std::filesystem::path landmark_file;
  std::filesystem::path overlay_file;
};

/// Writes "<stem>_landmarks.txt" and "<stem>_overlay.png" to `out_dir`.
PredictResult predict(const FarNet& net, const std::filesystem::path& image_path, Size2 input_size,
                      const std::filesystem::path& out_dir, const DecodeOptions& decode = {});
PredictResult predict(const std::filesystem::path& checkpoint, const std::filesystem::path& image_path,
                      const std::filesystem::path& out_dir);

}  // namespace farnet
