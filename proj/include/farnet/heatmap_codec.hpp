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

// Landmark <-> Gaussian heatmap conversion and coordinate-frame bookkeeping.
//
// Pixel (x, y) of a grid is column x, row y; landmark coordinates are
// continuous in the same units and are never rounded before encoding.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "farnet/tensor.hpp"

namespace farnet {

enum class Frame { original, net_input, heatmap_L1, heatmap_L0 };

std::string to_string(Frame f);
Frame frame_from_string(const std::string& s);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Size2 {
  int width = 0;
  int height = 0;
  bool operator==(const Size2&) const = default;
};

/// Ordered landmark coordinates in one coordinate frame.
struct LandmarkSet {
  std::vector<Point2> points;
  Frame frame = Frame::original;
  std::vector<double> confidences;  // empty, or one value in [0,1] per point
  std::vector<bool> visibility;     // empty, or one flag per point (false = outside the image)
  std::vector<bool> low_confidence; // set by decode_landmarks

  std::size_t size() const { return points.size(); }
  /// Throws ParameterError unless the set holds exactly `k` finite points and
  /// the optional per-point vectors are either empty or of length k.
  void validate(std::size_t k) const;
};

/// Output grid of a heatmap head. stride is relative to the network input (1 or 2).
struct HeatmapGrid {
  int width = 0;
  int height = 0;
  int stride = 1;

  void validate() const;
  /// heatmap_L0 for stride 1, heatmap_L1 for stride 2.
  Frame frame() const;
  bool operator==(const HeatmapGrid&) const = default;
};

/// K x H x W stack of real-valued heatmaps, one channel per landmark.
class HeatmapStack {
 public:
  HeatmapStack() = default;
  HeatmapStack(int k, HeatmapGrid grid, double fill = 0.0);

  int landmarks() const { return k_; }
  const HeatmapGrid& grid() const { return grid_; }
  int width() const { return grid_.width; }
  int height() const { return grid_.height; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const HeatmapStack& other) const { return k_ == other.k_ && grid_ == other.grid_; }

  double& at(int k, int y, int x) { return data_[index(k, y, x)]; }
  double at(int k, int y, int x) const { return data_[index(k, y, x)]; }
  std::span<double> channel(int k);
  std::span<const double> channel(int k) const;
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// One flag per channel: landmark centre was outside the grid when encoded.
  std::vector<bool> out_of_grid;

  static HeatmapStack from_tensor(const Tensor& t, int stride);
  Tensor to_tensor() const;

 private:
  std::size_t index(int k, int y, int x) const {
    return (static_cast<std::size_t>(k) * grid_.height + y) * grid_.width + x;
  }
  int k_ = 0;
  HeatmapGrid grid_;
  std::vector<double> data_;
};

/// Per-axis scaling between two image sizes.
struct FrameTransform {
  Frame src_frame = Frame::original;
  Frame dst_frame = Frame::net_input;
  Size2 src_size;
  Size2 dst_size;
  double scale_x = 1.0;
  double scale_y = 1.0;

  /// scale = dst / src per axis. Zero-sized src or dst throws ParameterError.
  static FrameTransform between(Frame src_frame, Size2 src, Frame dst_frame, Size2 dst);
  FrameTransform inverse() const;
  Point2 apply(Point2 p) const { return {p.x * scale_x, p.y * scale_y}; }
};

/// Unnormalized Gaussian per landmark: exp(-((x-x_k)^2 + (y-y_k)^2) / (2 sigma^2)).
HeatmapStack encode_heatmap_stack(const LandmarkSet& landmarks, const HeatmapGrid& grid, double sigma);

LandmarkSet map_coordinates(const LandmarkSet& landmarks, const FrameTransform& transform);

struct DecodeOptions {
  bool refine = true;
  double confidence_floor = 1e-6;
};

/// Per-channel global maximum, optionally refined to sub-pixel precision.
LandmarkSet decode_landmarks(const HeatmapStack& stack, const DecodeOptions& options = {});

/// Second-order Taylor fit over the 3x3 neighbourhood of `peak` (x, y), shifted
/// inward on the border. The result stays within half a pixel of the peak per
/// axis; falls back to the integer peak on grids narrower than 3 pixels or when
/// the local Hessian is not negative definite.
Point2 subpixel_refine(std::span<const double> channel, int width, int height, int peak_x, int peak_y);

struct Peak {
  int x = 0;
  int y = 0;
  double value = 0.0;
};

/// Diagnostic: up to `max_peaks` strict 3x3 local maxima of a channel, strongest
/// first, greedily suppressed within `min_distance` pixels of a stronger peak.
std::vector<Peak> top_peaks(std::span<const double> channel, int width, int height, int max_peaks,
                            double min_distance);

// Landmark files: one "x,y" decimal pair per line, landmark order.
/// Reads the first `expected_k` pairs (all pairs when nullopt). Extra non-empty
/// trailing lines are ignored with a warning; too few pairs throws DataError.
LandmarkSet read_landmark_file(const std::filesystem::path& path, Frame frame,
                               std::optional<std::size_t> expected_k = std::nullopt);
void write_landmark_file(const std::filesystem::path& path, const LandmarkSet& landmarks);

// Heatmap dump: "HMS1", K, H, W as little-endian uint32, then K*H*W float32 LE in C order.
void write_heatmap_dump(const std::filesystem::path& path, const HeatmapStack& stack);
HeatmapStack read_heatmap_dump(const std::filesystem::path& path, int stride = 1);

}  // namespace farnet
