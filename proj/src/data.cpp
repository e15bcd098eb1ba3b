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

#include "farnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "farnet/errors.hpp"

namespace farnet {

namespace fs = std::filesystem;

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::cephalometric: return "cephalometric";
    case DatasetKind::hand: return "hand";
    case DatasetKind::spine: return "spine";
    case DatasetKind::synthetic: return "synthetic";
  }
  return "unknown";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "cephalometric") return DatasetKind::cephalometric;
  if (s == "hand") return DatasetKind::hand;
  if (s == "spine") return DatasetKind::spine;
  if (s == "synthetic") return DatasetKind::synthetic;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

void AugmentConfig::validate() const {
  if (!(max_translate_frac >= 0.0 && max_translate_frac < 0.5)) throw ConfigError("max_translate_frac must be in [0, 0.5)");
  if (!(max_rotate_deg >= 0.0 && max_rotate_deg <= 180.0)) throw ConfigError("max_rotate_deg must be in [0, 180]");
  if (!(scale_lo > 0.0 && scale_lo <= 1.0 && 1.0 <= scale_hi)) throw ConfigError("scale range must satisfy 0 < lo <= 1 <= hi");
  if (!(intensity_jitter >= 0.0 && intensity_jitter < 1.0)) throw ConfigError("intensity_jitter must be in [0, 1)");
}

void DatasetSpec::validate() const {
  if (input_size.width <= 0 || input_size.height <= 0 || input_size.width % 32 != 0 || input_size.height % 32 != 0)
    throw ConfigError(fmt::format("input size {}x{} must be positive and divisible by 32", input_size.width,
                                  input_size.height));
  static const std::vector<std::string> kSplits = {"train", "val", "test", "all"};
  if (std::find(kSplits.begin(), kSplits.end(), split) == kSplits.end())
    throw ConfigError("unknown split '" + split + "' (expected train, val, test or all)");
  const int expected = kind == DatasetKind::cephalometric ? 19
                       : kind == DatasetKind::hand        ? 37
                       : kind == DatasetKind::spine       ? 68
                                                          : 0;
  if (expected != 0 && k_landmarks != expected)
    throw ConfigError(fmt::format("{} datasets have {} landmarks, config says {}", to_string(kind), expected,
                                  k_landmarks));
  if (k_landmarks < 1) throw ConfigError("k_landmarks must be >= 1");
  if (kind == DatasetKind::hand && (fold < 0 || fold > 2)) throw ConfigError("hand fold must be 0, 1 or 2");
  if (kind == DatasetKind::cephalometric && (!(mm_per_px > 0.0) || annotator_dirs.empty()))
    throw ConfigError("cephalometric spec needs mm_per_px > 0 and at least one annotator dir");
  if (kind == DatasetKind::hand && !(nominal_wrist_mm > 0.0)) throw ConfigError("nominal_wrist_mm must be positive");
  if (kind == DatasetKind::spine && (spine_test_count < 0 || spine_val_count < 0))
    throw ConfigError("spine split counts must be non-negative");
  if (kind == DatasetKind::synthetic && synthetic_count < 1) throw ConfigError("synthetic_count must be >= 1");
  if (kind != DatasetKind::synthetic && root_path.empty()) throw ConfigError("dataset root_path is empty");
  for (std::size_t i = 0; i < sdr_radii.size(); ++i)
    if (!(sdr_radii[i] > 0.0) || (i > 0 && sdr_radii[i] <= sdr_radii[i - 1]))
      throw ConfigError("sdr_radii must be positive and ascending");
  augmentation.validate();
}

std::vector<double> DatasetSpec::radii() const {
  if (!sdr_radii.empty()) return sdr_radii;
  switch (kind) {
    case DatasetKind::cephalometric: return {2.0, 2.5, 3.0, 4.0};
    case DatasetKind::hand: return {2.0, 4.0, 10.0};
    case DatasetKind::spine: return {};
    case DatasetKind::synthetic: return {1.0, 2.0, 4.0};
  }
  return {};
}

cv::Mat load_image(const fs::path& path) {
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH);
  if (raw.empty()) throw IoError("cannot read image " + path.string());
  double scale = 1.0 / 255.0;
  if (raw.depth() == CV_16U) scale = 1.0 / 65535.0;
  if (raw.depth() == CV_32F || raw.depth() == CV_64F) scale = 1.0;
  cv::Mat out;
  raw.convertTo(out, CV_32F, scale);
  return out;
}

cv::Mat sample_image(const Sample& sample) {
  if (!sample.image.empty()) return sample.image;
  if (sample.image_path.empty()) throw DataError("sample " + sample.id + " has neither an image nor a path");
  return load_image(sample.image_path);
}

namespace {

const std::vector<std::string> kImageExtensions = {".bmp", ".png", ".jpg", ".jpeg", ".tif", ".tiff", ".pgm"};

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("image directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(kImageExtensions.begin(), kImageExtensions.end(), ext) != kImageExtensions.end())
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.stem() < b.stem(); });
  if (out.empty()) throw DataError("no images in " + dir.string());
  return out;
}

LandmarkSet read_annotation(const fs::path& path, int k) {
  if (!fs::exists(path)) throw DataError("missing annotation file " + path.string());
  return read_landmark_file(path, Frame::original, static_cast<std::size_t>(k));
}

Sample file_sample(const fs::path& image_path, LandmarkSet landmarks) {
  Sample s;
  s.id = image_path.stem().string();
  s.image_path = image_path;
  const cv::Mat img = load_image(image_path);
  s.original_size = {img.cols, img.rows};
  s.landmarks_original = std::move(landmarks);
  return s;
}

std::vector<Sample> pick(const std::vector<Sample>& all, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  for (std::size_t i = lo; i < hi; ++i) out.push_back(i);
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

}  // namespace

std::vector<Sample> load_cephalometric(const DatasetSpec& spec) {
  const fs::path root(spec.root_path);
  std::vector<Sample> out;
  for (const fs::path& img : list_images(root / "images")) {
    const std::string id = img.stem().string();
    LandmarkSet mean;
    for (std::size_t a = 0; a < spec.annotator_dirs.size(); ++a) {
      const LandmarkSet ann = read_annotation(root / spec.annotator_dirs[a] / (id + ".txt"), 19);
      if (a == 0) {
        mean = ann;
        continue;
      }
      for (std::size_t k = 0; k < mean.size(); ++k) {
        mean.points[k].x += ann.points[k].x;
        mean.points[k].y += ann.points[k].y;
      }
    }
    const double n = static_cast<double>(spec.annotator_dirs.size());
    for (auto& p : mean.points) p = {p.x / n, p.y / n};
    Sample s = file_sample(img, std::move(mean));
    s.spacing = PixelSpacing::fixed(spec.mm_per_px);
    out.push_back(std::move(s));
  }
  if (out.size() != 400) spdlog::warn("cephalometric corpus has {} images, the published split expects 400", out.size());
  return out;
}

std::vector<Sample> load_hand(const DatasetSpec& spec) {
  const auto [a, b] = spec.wrist_landmarks;
  if (a < 0 || b < 0 || a >= 37 || b >= 37 || a == b)
    throw DataError(fmt::format("hand dataset needs two distinct wrist landmark indices in [0,37), got {},{}", a, b));
  const fs::path root(spec.root_path);
  std::vector<Sample> out;
  for (const fs::path& img : list_images(root / "images")) {
    Sample s = file_sample(img, read_annotation(root / "annotations" / (img.stem().string() + ".txt"), 37));
    const Point2 pa = s.landmarks_original.points[static_cast<std::size_t>(a)];
    const Point2 pb = s.landmarks_original.points[static_cast<std::size_t>(b)];
    const double width = std::hypot(pa.x - pb.x, pa.y - pb.y);
    if (!(width > 0.0)) throw DataError("wrist landmarks coincide in " + s.id);
    s.spacing = PixelSpacing::wrist(width, spec.nominal_wrist_mm);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> load_spine(const DatasetSpec& spec) {
  const fs::path root(spec.root_path);
  std::vector<Sample> out;
  for (const fs::path& img : list_images(root / "images")) {
    Sample s = file_sample(img, read_annotation(root / "annotations" / (img.stem().string() + ".txt"), 68));
    s.spacing = PixelSpacing::fraction();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> load_dataset(const DatasetSpec& spec) {
  spec.validate();
  const bool all = spec.split == "all";
  switch (spec.kind) {
    case DatasetKind::synthetic:
      return generate_synthetic(spec.synthetic_seed, spec.synthetic_count, spec.k_landmarks, spec.input_size);
    case DatasetKind::cephalometric: {
      auto s = load_cephalometric(spec);
      if (all) return s;
      const std::size_t n = s.size();
      const std::size_t t1 = std::min<std::size_t>(150, n), t2 = std::min<std::size_t>(300, n);
      if (spec.split == "train") return pick(s, range(0, t1));
      if (spec.split == "val") return pick(s, range(t1, t2));
      return pick(s, range(t2, n));
    }
    case DatasetKind::hand: {
      auto s = load_hand(spec);
      if (all) return s;
      std::vector<std::size_t> held, rest;
      for (std::size_t i = 0; i < s.size(); ++i) (static_cast<int>(i % 3) == spec.fold ? held : rest).push_back(i);
      return pick(s, spec.split == "train" ? rest : held);
    }
    case DatasetKind::spine: {
      auto s = load_spine(spec);
      if (all) return s;
      const std::size_t n = s.size();
      const std::size_t n_test = static_cast<std::size_t>(spec.spine_test_count);
      const std::size_t n_val = static_cast<std::size_t>(spec.spine_val_count);
      if (n_test + n_val >= n) throw DataError(fmt::format("spine corpus of {} images cannot hold the split", n));
      std::vector<std::size_t> order = range(0, n);
      std::mt19937_64 rng(spec.split_seed);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
      const std::size_t train_end = n - n_test - n_val;
      std::vector<std::size_t> idx;
      if (spec.split == "train") idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_end));
      if (spec.split == "val")
        idx.assign(order.begin() + static_cast<std::ptrdiff_t>(train_end),
                   order.begin() + static_cast<std::ptrdiff_t>(train_end + n_val));
      if (spec.split == "test") idx.assign(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
      std::sort(idx.begin(), idx.end());
      return pick(s, idx);
    }
  }
  return {};
}

fs::path write_split_manifest(const fs::path& dir, const DatasetSpec& spec, const std::vector<Sample>& samples) {
  fs::create_directories(dir);
  const fs::path path = dir / (to_string(spec.kind) + "_" + spec.split + ".txt");
  std::ofstream out(path);
  for (const Sample& s : samples) out << s.id << "\n";
  if (!out) throw IoError("cannot write split manifest " + path.string());
  return path;
}

cv::Mat resize_to(const cv::Mat& image, Size2 size) {
  if (image.cols == size.width && image.rows == size.height) return image.clone();
  const double sx = static_cast<double>(size.width) / image.cols;
  const double sy = static_cast<double>(size.height) / image.rows;
  cv::Mat src = image;
  if (sx < 1.0 || sy < 1.0) {
    const double gx = sx < 1.0 ? 0.5 * (1.0 / sx - 1.0) : 0.0;
    const double gy = sy < 1.0 ? 0.5 * (1.0 / sy - 1.0) : 0.0;
    cv::GaussianBlur(image, src, cv::Size(0, 0), std::max(gx, 1e-3), std::max(gy, 1e-3), cv::BORDER_REPLICATE);
  }
  const cv::Mat m = (cv::Mat_<double>(2, 3) << sx, 0.0, 0.0, 0.0, sy, 0.0);
  cv::Mat out;
  cv::warpAffine(src, out, m, cv::Size(size.width, size.height), cv::INTER_LINEAR, cv::BORDER_REPLICATE);
  return out;
}

Tensor prepare_image(const cv::Mat& image, Size2 input_size, InputScaling scaling) {
  cv::Mat gray = image;
  if (gray.type() != CV_32F) throw DataError("prepare_image expects a single-channel float image");
  gray = resize_to(gray, input_size);
  static constexpr std::array<float, 3> kMean = {0.485f, 0.456f, 0.406f};
  static constexpr std::array<float, 3> kStd = {0.229f, 0.224f, 0.225f};
  Tensor t({3, input_size.height, input_size.width});
  for (int c = 0; c < 3; ++c) {
    float* dst = t.channel(c);
    for (int y = 0; y < input_size.height; ++y) {
      const float* row = gray.ptr<float>(y);
      for (int x = 0; x < input_size.width; ++x) {
        const float v = row[x];
        dst[y * input_size.width + x] = scaling == InputScaling::imagenet ? (v - kMean[c]) / kStd[c] : v;
      }
    }
  }
  return t;
}

PreparedInput prepare_input(const Sample& sample, const DatasetSpec& spec, InputScaling scaling) {
  const cv::Mat img = sample_image(sample);
  const Size2 original{img.cols, img.rows};
  PreparedInput p;
  p.image = prepare_image(img, spec.input_size, scaling);
  p.to_net = FrameTransform::between(Frame::original, original, Frame::net_input, spec.input_size);
  p.landmarks_net = map_coordinates(sample.landmarks_original, p.to_net);
  return p;
}

std::array<double, 6> affine_matrix(const AffineParams& params, Size2 size) {
  const double cx = (size.width - 1) / 2.0;
  const double cy = (size.height - 1) / 2.0;
  const double theta = params.rotate_deg * std::numbers::pi / 180.0;
  const double a = params.scale * std::cos(theta);
  const double b = params.scale * std::sin(theta);
  return {a, b, (1.0 - a) * cx - b * cy + params.tx, -b, a, b * cx + (1.0 - a) * cy + params.ty};
}

AffineParams sample_affine(const AugmentConfig& config, Size2 size, std::uint64_t stream) {
  AffineParams p;
  if (!config.enabled) return p;
  std::mt19937_64 rng(splitmix64(config.seed ^ splitmix64(stream)));
  p.tx = uniform(rng, -config.max_translate_frac, config.max_translate_frac) * size.width;
  p.ty = uniform(rng, -config.max_translate_frac, config.max_translate_frac) * size.height;
  p.rotate_deg = uniform(rng, -config.max_rotate_deg, config.max_rotate_deg);
  p.scale = uniform(rng, config.scale_lo, config.scale_hi);
  p.intensity_gain = 1.0 + uniform(rng, -config.intensity_jitter, config.intensity_jitter);
  return p;
}

Sample apply_affine(const Sample& sample, const AffineParams& params) {
  const cv::Mat img = sample_image(sample);
  const Size2 size{img.cols, img.rows};
  const auto m = affine_matrix(params, size);
  Sample out = sample;
  out.image_path.clear();
  out.image = cv::Mat();  // the copy shares pixels with `sample`
  const cv::Mat mat = (cv::Mat_<double>(2, 3) << m[0], m[1], m[2], m[3], m[4], m[5]);
  cv::warpAffine(img, out.image, mat, img.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0.0));
  if (params.intensity_gain != 1.0) {
    out.image *= params.intensity_gain;
    cv::min(out.image, 1.0, out.image);
    cv::max(out.image, 0.0, out.image);
  }
  LandmarkSet& lm = out.landmarks_original;
  const std::size_t k = lm.size();
  std::vector<bool> vis(k, true);
  for (std::size_t i = 0; i < k; ++i) {
    const Point2 p = lm.points[i];
    const Point2 q{m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
    lm.points[i] = q;
    const bool inside = q.x >= 0.0 && q.y >= 0.0 && q.x <= size.width - 1 && q.y <= size.height - 1;
    vis[i] = inside && (sample.landmarks_original.visibility.empty() || sample.landmarks_original.visibility[i]);
  }
  lm.visibility = std::move(vis);
  return out;
}

Sample augment(const Sample& sample, const AugmentConfig& config, std::uint64_t stream) {
  if (!config.enabled) return sample;
  return apply_affine(sample, sample_affine(config, sample.original_size, stream));
}

namespace {

struct Pattern {
  int type;  // 0 blob, 1 cross, 2 ring, 3 box
  double amplitude;
  double radius;
};

Pattern pattern_for(int k) {
  return {k % 4, 0.55 + 0.225 * ((k / 4) % 3), 1.0 + 0.25 * ((k / 12) % 3)};
}

double pattern_value(const Pattern& p, double dx, double dy) {
  const double s = p.radius;
  const double d = std::hypot(dx, dy);
  const double cheb = std::max(std::abs(dx), std::abs(dy));
  switch (p.type) {
    case 0: return std::exp(-d * d / (2.0 * (2.5 * s) * (2.5 * s)));
    case 1: {
      const double arm = std::min(dx * dx, dy * dy);
      const double cut = 1.0 / (1.0 + std::exp((cheb - 6.0 * s) / 0.5));
      return std::exp(-arm / (2.0 * 0.8 * 0.8)) * cut;
    }
    case 2: return std::exp(-(d - 5.0 * s) * (d - 5.0 * s) / (2.0 * 0.9 * 0.9));
    default: return std::exp(-(cheb - 5.0 * s) * (cheb - 5.0 * s) / (2.0 * 0.9 * 0.9));
  }
}

}  // namespace

std::vector<Sample> generate_synthetic(std::uint64_t seed, int n_images, int k, Size2 image_size) {
  if (n_images < 1 || k < 1) throw ParameterError("generate_synthetic needs n_images >= 1 and k >= 1");
  if (image_size.width % 32 != 0 || image_size.height % 32 != 0 || image_size.width <= 0 || image_size.height <= 0)
    throw ParameterError("synthetic image size must be positive and divisible by 32");
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  const int w = image_size.width, h = image_size.height;
  for (int n = 0; n < n_images; ++n) {
    double extent = 0.0;
    for (int i = 0; i < k; ++i) extent = std::max(extent, 7.0 * pattern_for(i).radius);
    const double margin = extent + 2.0;
    const double separation = 2.0 * extent + 2.0;
    if (w - 1 - 2 * margin <= 0 || h - 1 - 2 * margin <= 0)
      throw DataError(fmt::format("image {}x{} too small for synthetic patterns", w, h));

    LandmarkSet lm;
    lm.frame = Frame::original;
    for (int i = 0; i < k; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < 5000 && !placed; ++attempt) {
        const Point2 p{uniform(rng, margin, w - 1 - margin), uniform(rng, margin, h - 1 - margin)};
        placed = std::all_of(lm.points.begin(), lm.points.end(),
                             [&](const Point2& q) { return std::hypot(p.x - q.x, p.y - q.y) >= separation; });
        if (placed) lm.points.push_back(p);
      }
      if (!placed)
        throw DataError(fmt::format("cannot place {} non-overlapping patterns on a {}x{} image", k, w, h));
    }

    cv::Mat img(h, w, CV_32F);
    const double fx = uniform(rng, 0.02, 0.06), fy = uniform(rng, 0.02, 0.06);
    const double phx = uniform(rng, 0.0, 6.283), phy = uniform(rng, 0.0, 6.283);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at<float>(y, x) = static_cast<float>(0.08 + 0.03 * std::sin(fx * x + phx) * std::cos(fy * y + phy));
    for (int i = 0; i < k; ++i) {
      const Pattern pat = pattern_for(i);
      const Point2 c = lm.points[static_cast<std::size_t>(i)];
      const int r = static_cast<int>(std::ceil(extent + 4.0));
      const int x0 = std::max(0, static_cast<int>(c.x) - r), x1 = std::min(w - 1, static_cast<int>(c.x) + r);
      const int y0 = std::max(0, static_cast<int>(c.y) - r), y1 = std::min(h - 1, static_cast<int>(c.y) + r);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          img.at<float>(y, x) += static_cast<float>(pat.amplitude * pattern_value(pat, x - c.x, y - c.y));
    }
    cv::min(img, 1.0, img);

    Sample s;
    s.id = fmt::format("synthetic_{:03d}", n);
    s.image = img;
    s.original_size = image_size;
    s.landmarks_original = std::move(lm);
    s.spacing = PixelSpacing::fixed(1.0);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace farnet
