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

// Landmark evaluation metrics: radial error, MRE, SDR, and the spine
// MSE-fraction / Pearson pair.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "farnet/heatmap_codec.hpp"

namespace farnet {

enum class SpacingMode { fixed_mm_per_px, wrist_width_normalized, fraction_of_image };

std::string to_string(SpacingMode m);
SpacingMode spacing_mode_from_string(const std::string& s);

struct PixelSpacing {
  SpacingMode mode = SpacingMode::fixed_mm_per_px;
  std::optional<double> mm_per_px;
  std::optional<double> wrist_width_px;    // wrist_width_normalized
  std::optional<double> nominal_wrist_mm;  // wrist_width_normalized

  static PixelSpacing fixed(double mm_per_px);
  static PixelSpacing wrist(double wrist_width_px, double nominal_mm = 50.0);
  static PixelSpacing fraction();

  /// Throws ParameterError when a field the mode needs is missing or not positive.
  void validate() const;
  /// Millimetres per original-frame pixel. fraction_of_image reports pixels (factor 1).
  double scale() const;
  /// "mm" or "px".
  std::string unit() const;
};

/// Euclidean distance per landmark, scaled by `spacing`. Both sets must be in
/// the original frame with equal K (ComparisonError otherwise).
std::vector<double> radial_errors(const LandmarkSet& pred, const LandmarkSet& gt, const PixelSpacing& spacing);

/// Mean and population standard deviation.
std::pair<double, double> mre(const std::vector<double>& errors);

/// Percent of errors <= r for each radius. Radii must be positive and sorted.
std::map<double, double> sdr(const std::vector<double>& errors, const std::vector<double>& radii);

struct SpineMetrics {
  double mse_fraction = 0.0;
  double pearson_rho = 0.0;
};

/// Coordinates are divided by the image width (x) and height (y); mse_fraction
/// is the mean of squared differences over every landmark, axis and image, and
/// rho the Pearson correlation of the flattened normalized vectors (NaN when
/// either vector is constant).
SpineMetrics spine_metrics(const std::vector<LandmarkSet>& pred_sets, const std::vector<LandmarkSet>& gt_sets,
                           const std::vector<Size2>& image_sizes);

/// Pearson correlation; NaN when either input has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct EvalReport {
  std::string unit = "mm";
  std::size_t images = 0;
  double mre_mm = 0.0;
  double std_mm = 0.0;
  std::map<double, double> sdr;  // radius -> percent
  std::optional<double> mse_fraction;
  std::optional<double> pearson_rho;
  std::vector<double> per_landmark;  // mean error per landmark index
  std::size_t low_confidence = 0;    // decoded landmarks flagged low-confidence

  std::string to_text() const;
  /// One "key=value" per line.
  std::string to_key_values() const;
  void write(const std::filesystem::path& text_path, const std::filesystem::path& kv_path) const;
};

/// Accumulates per-image errors into an EvalReport.
class MetricAccumulator {
 public:
  MetricAccumulator(std::vector<double> radii, bool spine);

  void add(const LandmarkSet& pred, const LandmarkSet& gt, const PixelSpacing& spacing, Size2 image_size);
  EvalReport report() const;

 private:
  std::vector<double> radii_;
  bool spine_;
  std::string unit_;
  std::vector<double> errors_;
  std::vector<std::vector<double>> per_landmark_;
  std::vector<LandmarkSet> preds_;
  std::vector<LandmarkSet> gts_;
  std::vector<Size2> sizes_;
  std::size_t low_confidence_ = 0;
};

}  // namespace farnet
