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

// farnet command-line interface.
//
//   farnet train     --config run.json
//   farnet evaluate  --checkpoint best.fnta --dataset dataset.json [--out dir]
//   farnet predict   --checkpoint best.fnta --image x.png --out dir
//   farnet selftest  [--only 1,3,5] [--work-dir dir]
//
// Exit codes: 0 success, 1 self-test failure, 2 configuration or usage error,
// 3 data error, 4 numeric abort, 5 I/O or missing resource, 6 other error.

#include <omp.h>

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "farnet/config.hpp"
#include "farnet/engine.hpp"
#include "farnet/errors.hpp"
#include "farnet/selftest.hpp"

namespace {

enum Exit { kOk = 0, kSelftestFailed = 1, kConfig = 2, kData = 3, kNumeric = 4, kIo = 5, kOther = 6 };

farnet::DatasetSpec read_dataset_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw farnet::ConfigError("cannot open dataset spec " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw farnet::ConfigError(path + ": " + e.what());
  }
  // Accept either a bare DatasetSpec or a full run config.
  if (j.contains("dataset")) j = j["dataset"];
  farnet::DatasetSpec spec = farnet::dataset_spec_from_json(j);
  spec.validate();
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FARNet anatomical landmark detector"};
  app.require_subcommand(1);
  bool verbose = false;
  int threads = 0;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

  std::string config_path;
  auto* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("--config", config_path, "Run config (JSON)")->required();

  std::string checkpoint, dataset_path, out_dir = "eval";
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset split");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint archive")->required();
  evaluate->add_option("--dataset", dataset_path, "Dataset spec (JSON)")->required();
  evaluate->add_option("--out", out_dir, "Directory for report.txt and report.kv");

  std::string image_path, predict_out;
  auto* predict = app.add_subcommand("predict", "Detect landmarks on one image");
  predict->add_option("--checkpoint", checkpoint, "Checkpoint archive")->required();
  predict->add_option("--image", image_path, "Input image")->required();
  predict->add_option("--out", predict_out, "Output directory")->required();

  std::vector<int> only;
  std::string work_dir;
  auto* selftest = app.add_subcommand("selftest", "Run the property suites");
  selftest->add_option("--only", only, "Criteria to run")->delimiter(',')->check(CLI::Range(1, 8));
  selftest->add_option("--work-dir", work_dir, "Scratch directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (train->parsed()) {
      farnet::RunConfig cfg = farnet::load_run_config(config_path);
      if (threads > 0) cfg.threads = threads;
      const farnet::TrainResult r = farnet::train(cfg);
      fmt::print("iterations: {}\nfinal epoch loss: {:.6e}\nlast checkpoint: {}\nbest checkpoint: {}\n", r.iterations,
                 r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back(), r.last_checkpoint.string(),
                 r.best_checkpoint.string());
      if (r.best_metric) fmt::print("best validation MRE: {:.4f}\n", *r.best_metric);
    } else if (evaluate->parsed()) {
      const farnet::EvalReport rep = farnet::evaluate(checkpoint, read_dataset_spec(dataset_path));
      rep.write(std::filesystem::path(out_dir) / "report.txt", std::filesystem::path(out_dir) / "report.kv");
      std::cout << rep.to_text();
    } else if (predict->parsed()) {
      const farnet::PredictResult r = farnet::predict(checkpoint, image_path, predict_out);
      for (std::size_t k = 0; k < r.landmarks.size(); ++k) {
        const bool low = !r.landmarks.low_confidence.empty() && r.landmarks.low_confidence[k];
        fmt::print("{:3d} {:10.3f} {:10.3f} confidence {:.4f}{}\n", k, r.landmarks.points[k].x,
                   r.landmarks.points[k].y, r.landmarks.confidences.empty() ? 0.0 : r.landmarks.confidences[k],
                   low ? " LOW" : "");
      }
      fmt::print("landmarks: {}\noverlay: {}\n", r.landmark_file.string(), r.overlay_file.string());
    } else if (selftest->parsed()) {
      farnet::SelftestOptions opts;
      opts.only.insert(only.begin(), only.end());
      opts.work_dir = work_dir;
      opts.on_result = [](const farnet::CriterionResult& r) { fmt::print("{}\n", farnet::format_result(r)); };
      bool all = true;
      for (const auto& r : farnet::run_selftest(opts)) all = all && r.pass;
      return all ? kOk : kSelftestFailed;
    }
  } catch (const farnet::ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kConfig;
  } catch (const farnet::DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kData;
  } catch (const farnet::NumericError& e) {
    spdlog::error("numeric abort: {}", e.what());
    return kNumeric;
  } catch (const farnet::IoError& e) {
    spdlog::error("I/O error: {}", e.what());
    return kIo;
  } catch (const farnet::ResourceError& e) {
    spdlog::error("resource error: {}", e.what());
    return kIo;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kOther;
  }
  return kOk;
}
