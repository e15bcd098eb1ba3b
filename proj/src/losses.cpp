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

#include "farnet/losses.hpp"

#include <cmath>

#include "farnet/errors.hpp"

namespace farnet {

namespace {

void require_same_shape(const HeatmapStack& pred, const HeatmapStack& gt) {
  if (!pred.same_shape(gt))
    throw ShapeError("prediction " + std::to_string(pred.landmarks()) + "x" + std::to_string(pred.height()) + "x" +
                     std::to_string(pred.width()) + " does not match ground truth " + std::to_string(gt.landmarks()) +
                     "x" + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
}

double weighted_mean_square(const HeatmapStack& pred, const HeatmapStack& gt, double alpha) {
  require_same_shape(pred, gt);
  const auto p = pred.values();
  const auto y = gt.values();
  const double log_alpha = std::log(alpha);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double e = y[i] - p[i];
    acc += e * e * std::exp(y[i] * log_alpha);
  }
  return acc / static_cast<double>(p.size());
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw ConfigError("loss alpha must be >= 1");
  if (!(w_coarse >= 0.0) || !(w_fine >= 0.0)) throw ConfigError("head weights must be non-negative");
  if (w_coarse == 0.0 && w_fine == 0.0) throw ConfigError("head weights cannot both be zero");
}

double l2_heatmap_loss(const HeatmapStack& pred, const HeatmapStack& gt) {
  require_same_shape(pred, gt);
  const auto p = pred.values();
  const auto y = gt.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (y[i] - p[i]) * (y[i] - p[i]);
  return acc / static_cast<double>(p.size());
}

double ewc_loss(const HeatmapStack& pred, const HeatmapStack& gt, double alpha) {
  if (!(alpha >= 1.0)) throw ParameterError("EWC alpha must be >= 1");
  return weighted_mean_square(pred, gt, alpha);
}

HeatmapStack ewc_loss_gradient(const HeatmapStack& pred, const HeatmapStack& gt, double alpha) {
  if (!(alpha >= 1.0)) throw ParameterError("EWC alpha must be >= 1");
  require_same_shape(pred, gt);
  HeatmapStack grad(pred.landmarks(), pred.grid());
  const auto p = pred.values();
  const auto y = gt.values();
  auto g = grad.values();
  const double scale = 2.0 / static_cast<double>(p.size());
  const double log_alpha = std::log(alpha);
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = -scale * (y[i] - p[i]) * std::exp(y[i] * log_alpha);
  return grad;
}

HeatmapStack encode_for_grid(const LandmarkSet& landmarks, const HeatmapGrid& grid, double sigma) {
  grid.validate();
  const Size2 net{grid.width * grid.stride, grid.height * grid.stride};
  const auto t = FrameTransform::between(Frame::net_input, net, grid.frame(), Size2{grid.width, grid.height});
  return encode_heatmap_stack(map_coordinates(landmarks, t), grid, sigma);
}

CoarseFineResult coarse_fine_loss_with_grad(const HeatmapStack* coarse_pred, const HeatmapStack* fine_pred,
                                            const LandmarkSet& landmarks, double sigma, const LossConfig& config) {
  config.validate();
  if (coarse_pred && coarse_pred->grid().stride != 2)
    throw ConfigError("coarse head must predict on a stride-2 grid");
  if (fine_pred && fine_pred->grid().stride != 1) throw ConfigError("fine head must predict on a stride-1 grid");
  if (coarse_pred && fine_pred &&
      (coarse_pred->width() * 2 != fine_pred->width() || coarse_pred->height() * 2 != fine_pred->height()))
    throw ConfigError("coarse grid is not half the fine grid");

  const double alpha = config.kind == LossKind::ewc ? config.alpha : 1.0;
  CoarseFineResult r;
  auto head = [&](const HeatmapStack& pred, double weight, double& part, std::optional<HeatmapStack>& grad) {
    const HeatmapStack gt = encode_for_grid(landmarks, pred.grid(), sigma);
    part = config.kind == LossKind::ewc ? ewc_loss(pred, gt, alpha) : l2_heatmap_loss(pred, gt);
    r.loss.total += weight * part;
    HeatmapStack g = ewc_loss_gradient(pred, gt, alpha);
    for (double& v : g.values()) v *= weight;
    grad = std::move(g);
  };
  if (coarse_pred) head(*coarse_pred, config.w_coarse, r.loss.coarse, r.coarse_grad);
  if (fine_pred) head(*fine_pred, config.w_fine, r.loss.fine, r.fine_grad);
  return r;
}

LossBreakdown coarse_fine_loss(const HeatmapStack* coarse_pred, const HeatmapStack* fine_pred,
                               const LandmarkSet& landmarks, double sigma, const LossConfig& config) {
  return coarse_fine_loss_with_grad(coarse_pred, fine_pred, landmarks, sigma, config).loss;
}

}  // namespace farnet
