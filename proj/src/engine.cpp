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

#include "farnet/engine.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "farnet/errors.hpp"

namespace farnet {

namespace fs = std::filesystem;

InputScaling input_scaling(const FarNet& net) {
  return net.backbone().imagenet_input() ? InputScaling::imagenet : InputScaling::unit;
}

LossBreakdown accumulate_gradients(const FarNet& net, const PreparedInput& input, double sigma,
                                   const LossConfig& loss) {
  const ForwardOutput out = net.forward(ag::constant(input.image));
  const bool supervise_coarse = net.config().refinement != Refinement::naive;
  std::optional<HeatmapStack> coarse, fine;
  if (supervise_coarse) coarse = HeatmapStack::from_tensor(out.coarse->value, 2);
  if (out.fine) fine = HeatmapStack::from_tensor(out.fine->value, 1);

  const CoarseFineResult r = coarse_fine_loss_with_grad(coarse ? &*coarse : nullptr, fine ? &*fine : nullptr,
                                                        input.landmarks_net, sigma, loss);
  if (!std::isfinite(r.loss.total)) return r.loss;

  std::vector<std::pair<ag::Var, Tensor>> roots;
  if (r.coarse_grad) roots.emplace_back(out.coarse, r.coarse_grad->to_tensor());
  if (r.fine_grad) roots.emplace_back(out.fine, r.fine_grad->to_tensor());
  ag::backward(roots);
  return r.loss;
}

void save_checkpoint(const fs::path& path, const RunConfig& config, const FarNet& net, const Adadelta* optimizer,
                     const CheckpointInfo& info) {
  TensorArchive a;
  a.meta["kind"] = "farnet-checkpoint";
  a.meta["config"] = to_json(config);
  a.meta["epoch"] = info.epoch;
  a.meta["iteration"] = info.iteration;
  a.meta["best_metric"] = info.best_metric ? nlohmann::json(*info.best_metric) : nlohmann::json(nullptr);
  for (const ParamEntry& e : net.params().entries())
    a.add((e.trainable ? "param/" : "buffer/") + e.name, e.var->value);
  if (optimizer != nullptr) optimizer->save(a);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_archive(path, a);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  LoadedCheckpoint out;
  out.archive = read_archive(path);
  const auto& meta = out.archive.meta;
  if (meta.value("kind", std::string()) != "farnet-checkpoint")
    throw ResourceError(path.string() + " is not a FARNet checkpoint");
  out.config = run_config_from_json(meta.at("config"));
  out.info.epoch = meta.value("epoch", 0);
  out.info.iteration = meta.value("iteration", 0LL);
  if (meta.contains("best_metric") && !meta["best_metric"].is_null()) out.info.best_metric = meta["best_metric"].get<double>();

  ModelConfig mc = out.config.model;
  mc.pretrained = false;
  out.net = std::make_unique<FarNet>(mc);
  for (const ParamEntry& e : out.net->params().entries()) {
    const std::string key = (e.trainable ? "param/" : "buffer/") + e.name;
    const Tensor* t = out.archive.find(key);
    if (t == nullptr || !t->same_shape(e.var->value))
      throw ResourceError(path.string() + ": missing or mis-shaped " + key);
    e.var->value = *t;
  }
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void write_nonfinite_dump(const fs::path& dir, long long iteration, int epoch, const std::vector<std::string>& ids,
                          const LossBreakdown& loss) {
  fs::create_directories(dir);
  const fs::path p = dir / fmt::format("nonfinite_{}.txt", iteration);
  std::ofstream out(p);
  out << "epoch=" << epoch << "\niteration=" << iteration << "\n";
  out << fmt::format("loss_total={}\nloss_coarse={}\nloss_fine={}\n", loss.total, loss.coarse, loss.fine);
  for (const auto& id : ids) out << "sample=" << id << "\n";
}

}  // namespace

TrainResult train(const RunConfig& config, TrainOptions options) {
  config.validate();
  if (config.threads > 0) omp_set_num_threads(config.threads);

  std::vector<Sample> samples = options.train_samples ? *options.train_samples : load_dataset(config.dataset);
  if (samples.empty()) throw DataError("training split is empty");
  std::vector<Sample> val;
  if (options.validation_samples) {
    val = *options.validation_samples;
  } else if (!config.validation_split.empty()) {
    DatasetSpec vs = config.dataset;
    vs.split = config.validation_split;
    vs.augmentation.enabled = false;
    val = load_dataset(vs);
  }
  const fs::path ckpt_dir(config.checkpoint_dir);
  if (options.write_checkpoints) {
    fs::create_directories(ckpt_dir);
    save_run_config(ckpt_dir / "run_config.json", config);
    write_split_manifest(ckpt_dir, config.dataset, samples);
  }
  spdlog::info("training on {} samples ({} validation), augmentation {}", samples.size(), val.size(),
               config.dataset.augmentation.enabled ? "on" : "off");
  if (config.dataset.augmentation.enabled) {
    const AugmentConfig& a = config.dataset.augmentation;
    spdlog::info("augmentation: translate {} rotate {} scale [{}, {}] jitter {} seed {}", a.max_translate_frac,
                 a.max_rotate_deg, a.scale_lo, a.scale_hi, a.intensity_jitter, a.seed);
  }

  TrainResult result;
  result.net = std::make_unique<FarNet>(config.model);
  FarNet& net = *result.net;
  Adadelta opt(net.params(), config.optimizer.adadelta());
  const InputScaling scaling = input_scaling(net);
  const DatasetSpec& spec = config.dataset;

  const std::size_t n = samples.size();
  long long iteration = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(mix(config.seed) ^ static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

    double epoch_sum = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t b0 = 0; b0 < n && !stop; b0 += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t b1 = std::min(n, b0 + static_cast<std::size_t>(config.batch_size));
      net.params().zero_grad();
      LossBreakdown batch;
      std::vector<std::string> ids;
      for (std::size_t j = b0; j < b1; ++j) {
        const std::size_t idx = order[j];
        ids.push_back(samples[idx].id);
        const std::uint64_t stream = static_cast<std::uint64_t>(epoch) * n + idx;
        const Sample s = augment(samples[idx], spec.augmentation, stream);
        const PreparedInput in = prepare_input(s, spec, scaling);
        const LossBreakdown l = accumulate_gradients(net, in, config.sigma, config.loss);
        batch.total += l.total;
        batch.coarse += l.coarse;
        batch.fine += l.fine;
      }
      const double m = static_cast<double>(b1 - b0);
      batch = {batch.total / m, batch.coarse / m, batch.fine / m};
      if (!std::isfinite(batch.total)) {
        write_nonfinite_dump(ckpt_dir, iteration + 1, epoch, ids, batch);
        throw NumericError(fmt::format("non-finite loss at iteration {} (epoch {}), batch [{}]", iteration + 1, epoch,
                                       fmt::join(ids, ", ")));
      }
      opt.step(static_cast<float>(1.0 / m));
      ++iteration;
      result.iteration_losses.push_back(batch);
      epoch_sum += batch.total;
      ++epoch_batches;
      if (options.on_iteration) options.on_iteration({iteration, epoch, batch});
      if (config.max_iterations > 0 && iteration >= config.max_iterations) stop = true;
    }
    net.params().zero_grad();
    const double epoch_loss = epoch_sum / static_cast<double>(std::max<std::size_t>(1, epoch_batches));
    result.epoch_losses.push_back(epoch_loss);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::string val_text;
    const bool last_epoch = epoch == config.epochs || stop;
    if (!val.empty() && config.validate_every > 0 && (epoch % config.validate_every == 0 || last_epoch)) {
      DatasetSpec vs = spec;
      vs.augmentation.enabled = false;
      const EvalReport rep = evaluate_samples(val, vs, model_predictor(net), scaling, config.decode);
      result.validation_mre.push_back(rep.mre_mm);
      val_text = fmt::format(" val MRE {:.4f} {}", rep.mre_mm, rep.unit);
      if (!result.best_metric || rep.mre_mm < *result.best_metric) {
        result.best_metric = rep.mre_mm;
        if (options.write_checkpoints) {
          result.best_checkpoint = ckpt_dir / "best.fnta";
          save_checkpoint(result.best_checkpoint, config, net, &opt, {epoch, iteration, result.best_metric});
        }
      }
    }
    spdlog::info("epoch {} loss {:.6e} ({} iterations, {:.1f}s){}", epoch, epoch_loss, iteration, secs, val_text);

    if (options.write_checkpoints && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0)
      save_checkpoint(ckpt_dir / fmt::format("epoch_{:04d}.fnta", epoch), config, net, &opt,
                      {epoch, iteration, result.best_metric});
    if (last_epoch && options.write_checkpoints) {
      result.last_checkpoint = ckpt_dir / "last.fnta";
      save_checkpoint(result.last_checkpoint, config, net, &opt, {epoch, iteration, result.best_metric});
      if (result.best_checkpoint.empty()) result.best_checkpoint = result.last_checkpoint;
    }
  }
  result.iterations = iteration;
  return result;
}

Predictor model_predictor(const FarNet& net) {
  return [&net](const Tensor& image, const Sample&, const PreparedInput&) {
    ag::NoGradGuard guard;
    const ForwardOutput out = net.forward(image);
    HeatmapPrediction p;
    p.coarse = HeatmapStack::from_tensor(out.coarse->value, 2);
    if (out.fine) p.fine = HeatmapStack::from_tensor(out.fine->value, 1);
    return p;
  };
}

LandmarkSet decode_prediction(const HeatmapPrediction& prediction, const FrameTransform& to_net,
                              const DecodeOptions& options) {
  const HeatmapStack* stack = prediction.fine ? &*prediction.fine : prediction.coarse ? &*prediction.coarse : nullptr;
  if (stack == nullptr) throw ParameterError("prediction holds no heatmaps");
  const LandmarkSet grid_points = decode_landmarks(*stack, options);
  const HeatmapGrid& g = stack->grid();
  const FrameTransform grid_to_net =
      FrameTransform::between(g.frame(), {g.width, g.height}, Frame::net_input, to_net.dst_size);
  return map_coordinates(map_coordinates(grid_points, grid_to_net), to_net.inverse());
}

EvalReport evaluate_samples(const std::vector<Sample>& samples, const DatasetSpec& spec, const Predictor& predictor,
                            InputScaling scaling, const DecodeOptions& decode) {
  MetricAccumulator acc(spec.radii(), spec.kind == DatasetKind::spine);
  for (const Sample& s : samples) {
    const PreparedInput in = prepare_input(s, spec, scaling);
    const HeatmapPrediction pred = predictor(in.image, s, in);
    const int k = pred.fine ? pred.fine->landmarks() : pred.coarse ? pred.coarse->landmarks() : 0;
    if (k != static_cast<int>(s.landmarks_original.size()))
      throw ConfigError(fmt::format("model predicts {} landmarks, sample {} has {}", k, s.id,
                                    s.landmarks_original.size()));
    const LandmarkSet lm = decode_prediction(pred, in.to_net, decode);
    acc.add(lm, s.landmarks_original, s.spacing, s.original_size);
  }
  return acc.report();
}

EvalReport evaluate(const fs::path& checkpoint, const DatasetSpec& spec) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  if (spec.k_landmarks != ck.net->config().k_landmarks)
    throw ConfigError(fmt::format("dataset has {} landmarks, checkpoint model {}", spec.k_landmarks,
                                  ck.net->config().k_landmarks));
  const std::vector<Sample> samples = load_dataset(spec);
  if (samples.empty()) throw DataError("evaluation split is empty");
  return evaluate_samples(samples, spec, model_predictor(*ck.net), input_scaling(*ck.net), ck.config.decode);
}

PredictResult predict(const FarNet& net, const fs::path& image_path, Size2 input_size, const fs::path& out_dir,
                      const DecodeOptions& decode) {
  const cv::Mat img = load_image(image_path);
  const Size2 original{img.cols, img.rows};
  const Tensor x = prepare_image(img, input_size, input_scaling(net));
  Sample dummy;
  PreparedInput prepared;
  prepared.to_net = FrameTransform::between(Frame::original, original, Frame::net_input, input_size);
  const HeatmapPrediction pred = model_predictor(net)(x, dummy, prepared);

  PredictResult r;
  r.landmarks = decode_prediction(pred, prepared.to_net, decode);
  fs::create_directories(out_dir);
  const std::string stem = image_path.stem().string();
  r.landmark_file = out_dir / (stem + "_landmarks.txt");
  write_landmark_file(r.landmark_file, r.landmarks);

  cv::Mat gray8, overlay;
  img.convertTo(gray8, CV_8U, 255.0);
  cv::cvtColor(gray8, overlay, cv::COLOR_GRAY2BGR);
  const int radius = std::max(2, std::min(img.cols, img.rows) / 150);
  for (std::size_t k = 0; k < r.landmarks.size(); ++k) {
    const cv::Point c(static_cast<int>(std::lround(r.landmarks.points[k].x)),
                      static_cast<int>(std::lround(r.landmarks.points[k].y)));
    const bool low = !r.landmarks.low_confidence.empty() && r.landmarks.low_confidence[k];
    if (low) {
      cv::drawMarker(overlay, c, cv::Scalar(0, 255, 255), cv::MARKER_TILTED_CROSS, 4 * radius, 1);
      cv::putText(overlay, std::to_string(k) + "?", c + cv::Point(radius + 1, -radius - 1), cv::FONT_HERSHEY_SIMPLEX,
                  0.3 + radius * 0.05, cv::Scalar(0, 255, 255), 1);
    } else {
      cv::circle(overlay, c, radius, cv::Scalar(0, 0, 255), cv::FILLED);
    }
  }
  r.overlay_file = out_dir / (stem + "_overlay.png");
  if (!cv::imwrite(r.overlay_file.string(), overlay)) throw IoError("cannot write " + r.overlay_file.string());
  return r;
}

PredictResult predict(const fs::path& checkpoint, const fs::path& image_path, const fs::path& out_dir) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  return predict(*ck.net, image_path, ck.config.dataset.input_size, out_dir, ck.config.decode);
}

}  // namespace farnet
