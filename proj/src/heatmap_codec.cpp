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

#include "farnet/heatmap_codec.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "farnet/errors.hpp"

namespace farnet {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string to_string(Frame f) {
  switch (f) {
    case Frame::original: return "original";
    case Frame::net_input: return "net_input";
    case Frame::heatmap_L1: return "heatmap_L1";
    case Frame::heatmap_L0: return "heatmap_L0";
  }
  return "unknown";
}

Frame frame_from_string(const std::string& s) {
  if (s == "original") return Frame::original;
  if (s == "net_input") return Frame::net_input;
  if (s == "heatmap_L1") return Frame::heatmap_L1;
  if (s == "heatmap_L0") return Frame::heatmap_L0;
  throw ParameterError("unknown coordinate frame '" + s + "'");
}

void LandmarkSet::validate(std::size_t k) const {
  if (points.size() != k)
    throw ParameterError("landmark set has " + std::to_string(points.size()) + " points, expected " +
                         std::to_string(k));
  for (const Point2& p : points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ParameterError("landmark coordinate is not finite");
  if (!confidences.empty() && confidences.size() != k) throw ParameterError("confidence count mismatch");
  if (!visibility.empty() && visibility.size() != k) throw ParameterError("visibility count mismatch");
}

void HeatmapGrid::validate() const {
  if (width < 1 || height < 1)
    throw ParameterError("heatmap grid must be at least 1x1, got " + std::to_string(width) + "x" +
                         std::to_string(height));
  if (stride != 1 && stride != 2) throw ParameterError("heatmap grid stride must be 1 or 2");
}

Frame HeatmapGrid::frame() const { return stride == 1 ? Frame::heatmap_L0 : Frame::heatmap_L1; }

HeatmapStack::HeatmapStack(int k, HeatmapGrid grid, double fill) : k_(k), grid_(grid) {
  grid_.validate();
  if (k < 1) throw ParameterError("heatmap stack needs at least one channel");
  data_.assign(static_cast<std::size_t>(k) * grid.width * grid.height, fill);
  out_of_grid.assign(static_cast<std::size_t>(k), false);
}

std::span<double> HeatmapStack::channel(int k) {
  return std::span<double>(data_).subspan(static_cast<std::size_t>(k) * grid_.width * grid_.height,
                                          static_cast<std::size_t>(grid_.width) * grid_.height);
}

std::span<const double> HeatmapStack::channel(int k) const {
  return std::span<const double>(data_).subspan(static_cast<std::size_t>(k) * grid_.width * grid_.height,
                                                static_cast<std::size_t>(grid_.width) * grid_.height);
}

HeatmapStack HeatmapStack::from_tensor(const Tensor& t, int stride) {
  if (t.rank() != 3) throw ShapeError("heatmap tensor must be K x H x W, got " + t.shape_string());
  HeatmapStack s(t.channels(), HeatmapGrid{t.width(), t.height(), stride});
  for (std::size_t i = 0; i < t.size(); ++i) s.data_[i] = t[i];
  return s;
}

Tensor HeatmapStack::to_tensor() const {
  Tensor t({k_, grid_.height, grid_.width});
  for (std::size_t i = 0; i < data_.size(); ++i) t[i] = static_cast<float>(data_[i]);
  return t;
}

FrameTransform FrameTransform::between(Frame src_frame, Size2 src, Frame dst_frame, Size2 dst) {
  if (src.width <= 0 || src.height <= 0 || dst.width <= 0 || dst.height <= 0)
    throw ParameterError("frame transform requires non-empty source and destination sizes");
  FrameTransform t;
  t.src_frame = src_frame;
  t.dst_frame = dst_frame;
  t.src_size = src;
  t.dst_size = dst;
  t.scale_x = static_cast<double>(dst.width) / src.width;
  t.scale_y = static_cast<double>(dst.height) / src.height;
  return t;
}

FrameTransform FrameTransform::inverse() const {
  FrameTransform t;
  t.src_frame = dst_frame;
  t.dst_frame = src_frame;
  t.src_size = dst_size;
  t.dst_size = src_size;
  t.scale_x = 1.0 / scale_x;
  t.scale_y = 1.0 / scale_y;
  return t;
}

HeatmapStack encode_heatmap_stack(const LandmarkSet& landmarks, const HeatmapGrid& grid, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("sigma must be positive");
  grid.validate();
  if (landmarks.frame != grid.frame())
    throw FrameError("landmarks are in frame " + to_string(landmarks.frame) + " but the grid expects " +
                     to_string(grid.frame()));
  const int k = static_cast<int>(landmarks.size());
  landmarks.validate(landmarks.size());
  HeatmapStack stack(k, grid);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int c = 0; c < k; ++c) {
    const Point2 p = landmarks.points[static_cast<std::size_t>(c)];
    stack.out_of_grid[static_cast<std::size_t>(c)] =
        p.x < 0.0 || p.y < 0.0 || p.x > grid.width - 1 || p.y > grid.height - 1;
    // Separable: exp(-(dx^2 + dy^2) k) = exp(-dx^2 k) * exp(-dy^2 k).
    std::vector<double> gx(static_cast<std::size_t>(grid.width));
    std::vector<double> gy(static_cast<std::size_t>(grid.height));
    for (int x = 0; x < grid.width; ++x) gx[static_cast<std::size_t>(x)] = std::exp(-(x - p.x) * (x - p.x) * inv);
    for (int y = 0; y < grid.height; ++y) gy[static_cast<std::size_t>(y)] = std::exp(-(y - p.y) * (y - p.y) * inv);
    for (int y = 0; y < grid.height; ++y)
      for (int x = 0; x < grid.width; ++x)
        stack.at(c, y, x) = gy[static_cast<std::size_t>(y)] * gx[static_cast<std::size_t>(x)];
  }
  return stack;
}

LandmarkSet map_coordinates(const LandmarkSet& landmarks, const FrameTransform& transform) {
  if (transform.src_size.width <= 0 || transform.src_size.height <= 0 || transform.dst_size.width <= 0 ||
      transform.dst_size.height <= 0)
    throw ParameterError("frame transform has a zero-sized source or destination");
  if (landmarks.frame != transform.src_frame)
    throw FrameError("landmarks are in frame " + to_string(landmarks.frame) + ", transform expects " +
                     to_string(transform.src_frame));
  LandmarkSet out = landmarks;
  out.frame = transform.dst_frame;
  for (Point2& p : out.points) p = transform.apply(p);
  return out;
}

Point2 subpixel_refine(std::span<const double> ch, int width, int height, int px, int py) {
  const Point2 integer{static_cast<double>(px), static_cast<double>(py)};
  if (width < 3 || height < 3) return integer;
  // On the border the 3x3 window is shifted inward by one pixel.
  const int cx = std::clamp(px, 1, width - 2);
  const int cy = std::clamp(py, 1, height - 2);
  auto v = [&](int dx, int dy) { return ch[static_cast<std::size_t>(cy + dy) * width + (cx + dx)]; };
  const double gx = 0.5 * (v(1, 0) - v(-1, 0));
  const double gy = 0.5 * (v(0, 1) - v(0, -1));
  const double hxx = v(1, 0) - 2.0 * v(0, 0) + v(-1, 0);
  const double hyy = v(0, 1) - 2.0 * v(0, 0) + v(0, -1);
  const double hxy = 0.25 * (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1));
  const double det = hxx * hyy - hxy * hxy;
  // A maximum needs a negative definite Hessian.
  if (!(hxx < 0.0) || !(det > 0.0)) return integer;
  const double ox = -(hyy * gx - hxy * gy) / det;
  const double oy = -(hxx * gy - hxy * gx) / det;
  if (!std::isfinite(ox) || !std::isfinite(oy)) return integer;
  return {std::clamp(cx + ox, px - 0.5, px + 0.5), std::clamp(cy + oy, py - 0.5, py + 0.5)};
}

LandmarkSet decode_landmarks(const HeatmapStack& stack, const DecodeOptions& options) {
  if (stack.landmarks() < 1) throw ParameterError("cannot decode an empty heatmap stack");
  const int w = stack.width();
  const int h = stack.height();
  LandmarkSet out;
  out.frame = stack.grid().frame();
  for (int k = 0; k < stack.landmarks(); ++k) {
    const auto ch = stack.channel(k);
    const auto it = std::max_element(ch.begin(), ch.end());
    const auto idx = static_cast<std::size_t>(std::distance(ch.begin(), it));
    const int px = static_cast<int>(idx % static_cast<std::size_t>(w));
    const int py = static_cast<int>(idx / static_cast<std::size_t>(w));
    const double peak = *it;
    const bool low = !(peak >= options.confidence_floor);
    Point2 p{static_cast<double>(px), static_cast<double>(py)};
    if (options.refine && !low) p = subpixel_refine(ch, w, h, px, py);
    out.points.push_back(p);
    out.confidences.push_back(low ? 0.0 : std::clamp(peak, 0.0, 1.0));
    out.low_confidence.push_back(low);
  }
  return out;
}

std::vector<Peak> top_peaks(std::span<const double> ch, int width, int height, int max_peaks, double min_distance) {
  std::vector<Peak> candidates;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double v = ch[static_cast<std::size_t>(y) * width + x];
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
          if (ch[static_cast<std::size_t>(ny) * width + nx] >= v) {
            is_max = false;
            break;
          }
        }
      if (is_max) candidates.push_back({x, y, v});
    }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
  std::vector<Peak> kept;
  for (const Peak& c : candidates) {
    if (static_cast<int>(kept.size()) >= max_peaks) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Peak& k) {
      return std::hypot(k.x - c.x, k.y - c.y) < min_distance;
    });
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

LandmarkSet read_landmark_file(const std::filesystem::path& path, Frame frame, std::optional<std::size_t> expected_k) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark file " + path.string());
  LandmarkSet out;
  out.frame = frame;
  std::string line;
  std::size_t line_no = 0;
  std::size_t ignored = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (expected_k && out.points.size() >= *expected_k) {
      ++ignored;
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    Point2 p;
    if (!(ss >> p.x >> p.y)) {
      if (expected_k) throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected \"x,y\"");
      ++ignored;
      continue;
    }
    out.points.push_back(p);
  }
  if (expected_k && out.points.size() != *expected_k)
    throw DataError(path.string() + " holds " + std::to_string(out.points.size()) + " landmarks, expected " +
                    std::to_string(*expected_k));
  if (ignored > 0) spdlog::warn("{}: ignored {} trailing line(s)", path.string(), ignored);
  out.validate(out.points.size());
  return out;
}

void write_landmark_file(const std::filesystem::path& path, const LandmarkSet& landmarks) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write landmark file " + path.string());
  out.precision(10);
  for (const Point2& p : landmarks.points) out << p.x << "," << p.y << "\n";
  if (!out) throw IoError("failed writing landmark file " + path.string());
}

void write_heatmap_dump(const std::filesystem::path& path, const HeatmapStack& stack) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write heatmap dump " + path.string());
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(stack.landmarks()),
                                   static_cast<std::uint32_t>(stack.height()),
                                   static_cast<std::uint32_t>(stack.width())};
  out.write("HMS1", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  std::vector<float> buf(stack.size());
  std::transform(stack.values().begin(), stack.values().end(), buf.begin(),
                 [](double v) { return static_cast<float>(v); });
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("failed writing heatmap dump " + path.string());
}

HeatmapStack read_heatmap_dump(const std::filesystem::path& path, int stride) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open heatmap dump " + path.string());
  char magic[4];
  std::uint32_t header[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(magic, "HMS1", 4) != 0) throw IoError(path.string() + " is not an HMS1 heatmap dump");
  HeatmapStack stack(static_cast<int>(header[0]),
                     HeatmapGrid{static_cast<int>(header[2]), static_cast<int>(header[1]), stride});
  std::vector<float> buf(stack.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw IoError(path.string() + " is truncated");
  std::copy(buf.begin(), buf.end(), stack.values().begin());
  return stack;
}

}  // namespace farnet
