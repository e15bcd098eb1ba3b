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

// Dataset ingestion, input preparation, augmentation and synthetic data.
//
// Root layouts (ids are file stems, samples are ordered by id):
//
//   cephalometric  <root>/images/<id>.{bmp,png,...}
//                  <root>/<annotator_dir>/<id>.txt   one dir per annotator
//   hand, spine    <root>/images/<id>.{bmp,png,...}
//                  <root>/annotations/<id>.txt
//
// Annotation files hold one "x,y" pair per line in landmark order.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "farnet/heatmap_codec.hpp"
#include "farnet/metrics.hpp"
#include "farnet/tensor.hpp"

namespace farnet {

enum class DatasetKind { cephalometric, hand, spine, synthetic };

std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct AugmentConfig {
  bool enabled = false;
  double max_translate_frac = 0.03;
  double max_rotate_deg = 15.0;
  double scale_lo = 0.85;
  double scale_hi = 1.15;
  double intensity_jitter = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::synthetic;
  std::string root_path;
  /// train | val | test | all. Cephalometric: 150 train, 150 val (Test1), 100 test
  /// (Test2) by sorted id. Hand: val and test are the held-out fold. Spine:
  /// seeded shuffle, the last spine_test_count ids are test, the spine_val_count
  /// before them val. Synthetic: every split is the whole set.
  std::string split = "train";
  int fold = 0;  // hand: held-out fold in {0,1,2}, fold(i) = i % 3 over sorted ids
  Size2 input_size{128, 128};
  int k_landmarks = 4;
  AugmentConfig augmentation;

  double mm_per_px = 0.1;                                       // cephalometric
  std::vector<std::string> annotator_dirs = {"annotations/senior", "annotations/junior"};
  std::array<int, 2> wrist_landmarks = {-1, -1};                // hand
  double nominal_wrist_mm = 50.0;                               // hand
  std::uint64_t split_seed = 0;                                 // spine
  int spine_test_count = 50;
  int spine_val_count = 0;
  int synthetic_count = 4;                                      // synthetic
  std::uint64_t synthetic_seed = 0;
  std::vector<double> sdr_radii;  // empty: per-kind default

  void validate() const;
  /// {2, 2.5, 3, 4} cephalometric, {2, 4, 10} hand, none for spine, {1, 2, 4} synthetic.
  std::vector<double> radii() const;
};

struct Sample {
  std::string id;
  /// Single-channel CV_32F in [0,1]; empty until load_image() for file-backed samples.
  cv::Mat image;
  std::filesystem::path image_path;
  LandmarkSet landmarks_original;
  Size2 original_size;
  PixelSpacing spacing;
};

/// Reads a radiograph as single-channel float in [0,1]. Throws IoError.
cv::Mat load_image(const std::filesystem::path& path);
/// The sample's image, reading it from disk when not resident.
cv::Mat sample_image(const Sample& sample);

std::vector<Sample> load_cephalometric(const DatasetSpec& spec);
std::vector<Sample> load_hand(const DatasetSpec& spec);
std::vector<Sample> load_spine(const DatasetSpec& spec);
/// Dispatches on spec.kind and returns the configured split.
std::vector<Sample> load_dataset(const DatasetSpec& spec);

/// Writes "<kind>_<split>.txt" under `dir`, one sample id per line.
std::filesystem::path write_split_manifest(const std::filesystem::path& dir, const DatasetSpec& spec,
                                           const std::vector<Sample>& samples);

/// Image value normalization.
enum class InputScaling {
  imagenet,  // per-channel (v - mean) / std with the ImageNet statistics
  unit,      // values kept in [0,1]
};

struct PreparedInput {
  Tensor image;               // 3 x H x W
  LandmarkSet landmarks_net;  // network-input frame
  FrameTransform to_net;      // original -> net_input
};

/// Rescales the image to spec.input_size with the per-axis map x' = x * W'/W
/// (anti-aliased when shrinking) and maps the landmarks the same way.
PreparedInput prepare_input(const Sample& sample, const DatasetSpec& spec, InputScaling scaling);
/// Image-only variant used at prediction time.
Tensor prepare_image(const cv::Mat& image, Size2 input_size, InputScaling scaling);
/// Single-channel resize consistent with the pure per-axis coordinate scaling.
cv::Mat resize_to(const cv::Mat& image, Size2 size);

/// Affine about the image centre ((W-1)/2, (H-1)/2): scale, rotate (degrees,
/// counter-clockwise in image coordinates with y down), then translate (px).
struct AffineParams {
  double tx = 0.0;
  double ty = 0.0;
  double rotate_deg = 0.0;
  double scale = 1.0;
  double intensity_gain = 1.0;
};

/// 2x3 forward matrix (source -> destination) for an image of `size`.
std::array<double, 6> affine_matrix(const AffineParams& params, Size2 size);
AffineParams sample_affine(const AugmentConfig& config, Size2 size, std::uint64_t stream);
/// Warps image and landmarks jointly; landmarks leaving the frame get visibility false.
Sample apply_affine(const Sample& sample, const AffineParams& params);
/// Random augmentation from the per-sample stream `stream` (e.g. epoch * n + index).
Sample augment(const Sample& sample, const AugmentConfig& config, std::uint64_t stream);

/// Renders `n_images` images of `image_size` with `k` distinguishable patterns
/// (blob, cross, ring, box, with landmark-dependent amplitude) centred at random
/// sub-pixel positions. Throws DataError when the patterns cannot be placed apart.
std::vector<Sample> generate_synthetic(std::uint64_t seed, int n_images, int k, Size2 image_size);

}  // namespace farnet
