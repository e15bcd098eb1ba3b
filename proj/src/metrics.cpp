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

#include "farnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "farnet/errors.hpp"

namespace farnet {

std::string to_string(SpacingMode m) {
  switch (m) {
    case SpacingMode::fixed_mm_per_px: return "fixed_mm_per_px";
    case SpacingMode::wrist_width_normalized: return "wrist_width_normalized";
    case SpacingMode::fraction_of_image: return "fraction_of_image";
  }
  return "unknown";
}

SpacingMode spacing_mode_from_string(const std::string& s) {
  if (s == "fixed_mm_per_px") return SpacingMode::fixed_mm_per_px;
  if (s == "wrist_width_normalized") return SpacingMode::wrist_width_normalized;
  if (s == "fraction_of_image") return SpacingMode::fraction_of_image;
  throw ConfigError("unknown spacing mode '" + s + "'");
}

PixelSpacing PixelSpacing::fixed(double mm_per_px) {
  PixelSpacing s;
  s.mode = SpacingMode::fixed_mm_per_px;
  s.mm_per_px = mm_per_px;
  s.validate();
  return s;
}

PixelSpacing PixelSpacing::wrist(double wrist_width_px, double nominal_mm) {
  PixelSpacing s;
  s.mode = SpacingMode::wrist_width_normalized;
  s.wrist_width_px = wrist_width_px;
  s.nominal_wrist_mm = nominal_mm;
  s.validate();
  return s;
}

PixelSpacing PixelSpacing::fraction() {
  PixelSpacing s;
  s.mode = SpacingMode::fraction_of_image;
  return s;
}

void PixelSpacing::validate() const {
  auto positive = [](const std::optional<double>& v) { return v.has_value() && std::isfinite(*v) && *v > 0.0; };
  switch (mode) {
    case SpacingMode::fixed_mm_per_px:
      if (!positive(mm_per_px)) throw ParameterError("fixed spacing needs a positive mm_per_px");
      break;
    case SpacingMode::wrist_width_normalized:
      if (!positive(wrist_width_px) || !positive(nominal_wrist_mm))
        throw ParameterError("wrist spacing needs positive wrist_width_px and nominal_wrist_mm");
      break;
    case SpacingMode::fraction_of_image: break;
  }
}

double PixelSpacing::scale() const {
  validate();
  switch (mode) {
    case SpacingMode::fixed_mm_per_px: return *mm_per_px;
    case SpacingMode::wrist_width_normalized: return *nominal_wrist_mm / *wrist_width_px;
    case SpacingMode::fraction_of_image: return 1.0;
  }
  return 1.0;
}

std::string PixelSpacing::unit() const { return mode == SpacingMode::fraction_of_image ? "px" : "mm"; }

std::vector<double> radial_errors(const LandmarkSet& pred, const LandmarkSet& gt, const PixelSpacing& spacing) {
  if (pred.size() != gt.size())
    throw ComparisonError(fmt::format("landmark count mismatch: {} predicted vs {} ground truth", pred.size(),
                                      gt.size()));
  if (pred.frame != gt.frame)
    throw ComparisonError("frame mismatch: " + to_string(pred.frame) + " vs " + to_string(gt.frame));
  if (gt.frame != Frame::original)
    throw ComparisonError("radial errors are measured in the original frame, got " + to_string(gt.frame));
  const double s = spacing.scale();
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    out[i] = std::hypot(pred.points[i].x - gt.points[i].x, pred.points[i].y - gt.points[i].y) * s;
  return out;
}

std::pair<double, double> mre(const std::vector<double>& errors) {
  if (errors.empty()) throw ParameterError("mre of an empty error list");
  double sum = 0.0;
  for (double e : errors) sum += e;
  const double mean = sum / static_cast<double>(errors.size());
  double ss = 0.0;
  for (double e : errors) ss += (e - mean) * (e - mean);
  return {mean, std::sqrt(ss / static_cast<double>(errors.size()))};
}

std::map<double, double> sdr(const std::vector<double>& errors, const std::vector<double>& radii) {
  if (errors.empty()) throw ParameterError("sdr of an empty error list");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ParameterError("sdr radii must be positive");
    if (i > 0 && radii[i] <= radii[i - 1]) throw ParameterError("sdr radii must be sorted ascending");
  }
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  std::map<double, double> out;
  for (double r : radii) {
    const auto hits = std::upper_bound(sorted.begin(), sorted.end(), r) - sorted.begin();
    out[r] = 100.0 * static_cast<double>(hits) / static_cast<double>(sorted.size());
  }
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ComparisonError("pearson: vectors differ in length");
  if (a.empty()) throw ParameterError("pearson of empty vectors");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

SpineMetrics spine_metrics(const std::vector<LandmarkSet>& pred_sets, const std::vector<LandmarkSet>& gt_sets,
                           const std::vector<Size2>& image_sizes) {
  if (pred_sets.size() != gt_sets.size() || gt_sets.size() != image_sizes.size())
    throw ComparisonError(fmt::format("spine metrics: {} predictions, {} ground truths, {} image sizes",
                                      pred_sets.size(), gt_sets.size(), image_sizes.size()));
  if (gt_sets.empty()) throw ParameterError("spine metrics of an empty set");
  std::vector<double> p, g;
  long double sq = 0.0L;
  for (std::size_t i = 0; i < gt_sets.size(); ++i) {
    const LandmarkSet& pr = pred_sets[i];
    const LandmarkSet& gt = gt_sets[i];
    if (pr.size() != gt.size()) throw ComparisonError(fmt::format("spine metrics: image {} K mismatch", i));
    const Size2 sz = image_sizes[i];
    if (sz.width <= 0 || sz.height <= 0) throw ParameterError("spine metrics: image size must be positive");
    const double w = sz.width, h = sz.height;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      const double dx = pr.points[k].x - gt.points[k].x;
      const double dy = pr.points[k].y - gt.points[k].y;
      sq += static_cast<long double>(dx * dx / (w * w));
      sq += static_cast<long double>(dy * dy / (h * h));
      p.push_back(pr.points[k].x / w);
      p.push_back(pr.points[k].y / h);
      g.push_back(gt.points[k].x / w);
      g.push_back(gt.points[k].y / h);
    }
  }
  if (p.empty()) throw ParameterError("spine metrics: no landmarks");
  SpineMetrics m;
  m.mse_fraction = static_cast<double>(sq / static_cast<long double>(p.size()));
  m.pearson_rho = pearson(p, g);
  return m;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << fmt::format("images: {}\n", images);
  os << fmt::format("MRE: {:.4f} +- {:.4f} {}\n", mre_mm, std_mm, unit);
  for (const auto& [r, pct] : sdr) os << fmt::format("SDR@{:g}{}: {:.2f}%\n", r, unit, pct);
  if (mse_fraction) os << fmt::format("MSE (fraction of image): {:.6f}\n", *mse_fraction);
  if (pearson_rho) os << fmt::format("Pearson rho: {:.6f}\n", *pearson_rho);
  if (low_confidence > 0) os << fmt::format("low-confidence landmarks: {}\n", low_confidence);
  os << "per-landmark mean error:\n";
  for (std::size_t k = 0; k < per_landmark.size(); ++k) os << fmt::format("  {:3d}: {:.4f}\n", k, per_landmark[k]);
  return os.str();
}

std::string EvalReport::to_key_values() const {
  std::ostringstream os;
  os << "unit=" << unit << "\n";
  os << "images=" << images << "\n";
  os << fmt::format("mre={:.17g}\nstd={:.17g}\n", mre_mm, std_mm);
  for (const auto& [r, pct] : sdr) os << fmt::format("sdr_{:g}={:.17g}\n", r, pct);
  if (mse_fraction) os << fmt::format("mse_fraction={:.17g}\n", *mse_fraction);
  if (pearson_rho) os << fmt::format("pearson_rho={:.17g}\n", *pearson_rho);
  os << "low_confidence=" << low_confidence << "\n";
  for (std::size_t k = 0; k < per_landmark.size(); ++k) os << fmt::format("landmark_{}={:.17g}\n", k, per_landmark[k]);
  return os.str();
}

void EvalReport::write(const std::filesystem::path& text_path, const std::filesystem::path& kv_path) const {
  auto dump = [](const std::filesystem::path& p, const std::string& body) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    out << body;
    if (!out) throw IoError("cannot write " + p.string());
  };
  dump(text_path, to_text());
  dump(kv_path, to_key_values());
}

MetricAccumulator::MetricAccumulator(std::vector<double> radii, bool spine) : radii_(std::move(radii)), spine_(spine) {}

void MetricAccumulator::add(const LandmarkSet& pred, const LandmarkSet& gt, const PixelSpacing& spacing,
                            Size2 image_size) {
  const std::vector<double> e = radial_errors(pred, gt, spacing);
  if (unit_.empty()) unit_ = spacing.unit();
  if (per_landmark_.empty()) per_landmark_.resize(e.size());
  if (per_landmark_.size() != e.size()) throw ComparisonError("landmark count changed between images");
  for (std::size_t k = 0; k < e.size(); ++k) per_landmark_[k].push_back(e[k]);
  errors_.insert(errors_.end(), e.begin(), e.end());
  for (bool low : pred.low_confidence) low_confidence_ += low ? 1 : 0;
  if (spine_) {
    preds_.push_back(pred);
    gts_.push_back(gt);
    sizes_.push_back(image_size);
  }
}

EvalReport MetricAccumulator::report() const {
  if (errors_.empty()) throw ParameterError("no images were evaluated");
  EvalReport r;
  r.unit = unit_;
  r.images = per_landmark_.front().size();
  std::tie(r.mre_mm, r.std_mm) = mre(errors_);
  if (!radii_.empty()) r.sdr = sdr(errors_, radii_);
  for (const auto& v : per_landmark_) r.per_landmark.push_back(mre(v).first);
  r.low_confidence = low_confidence_;
  if (spine_) {
    const SpineMetrics m = spine_metrics(preds_, gts_, sizes_);
    r.mse_fraction = m.mse_fraction;
    if (!std::isnan(m.pearson_rho)) r.pearson_rho = m.pearson_rho;
  }
  return r;
}

}  // namespace farnet
