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

#pragma once

#include <optional>

#include "farnet/heatmap_codec.hpp"

namespace farnet {

enum class LossKind { l2, ewc };

struct LossConfig {
  double alpha = 40.0;
  double w_coarse = 1.0;
  double w_fine = 1.0;
  LossKind kind = LossKind::ewc;

  /// alpha >= 1; weights non-negative and not both zero.
  void validate() const;
};

/// Mean over all K*W*H pixels of (y - y_hat)^2.
double l2_heatmap_loss(const HeatmapStack& pred, const HeatmapStack& gt);

/// Mean over all K*W*H pixels of (y - y_hat)^2 * alpha^y. The weight depends on
/// the ground truth only.
double ewc_loss(const HeatmapStack& pred, const HeatmapStack& gt, double alpha);

/// d ewc_loss / d pred: -2 (y - y_hat) alpha^y / (K W H) per pixel. alpha = 1 gives the L2 gradient.
HeatmapStack ewc_loss_gradient(const HeatmapStack& pred, const HeatmapStack& gt, double alpha);

struct LossBreakdown {
  double total = 0.0;
  double coarse = 0.0;
  double fine = 0.0;
};

/// Loss of both supervision heads against ground truth encoded from
/// `landmarks` (network-input frame) at each head's own resolution, with the
/// same sigma. Either prediction may be absent (its term is then 0). The coarse
/// head must sit on a stride-2 grid and the fine head on a stride-1 grid.
struct CoarseFineResult {
  LossBreakdown loss;
  std::optional<HeatmapStack> coarse_grad;
  std::optional<HeatmapStack> fine_grad;
};

LossBreakdown coarse_fine_loss(const HeatmapStack* coarse_pred, const HeatmapStack* fine_pred,
                               const LandmarkSet& landmarks, double sigma, const LossConfig& config);

/// Same as coarse_fine_loss, additionally returning d total / d prediction per head.
CoarseFineResult coarse_fine_loss_with_grad(const HeatmapStack* coarse_pred, const HeatmapStack* fine_pred,
                                            const LandmarkSet& landmarks, double sigma, const LossConfig& config);

/// Ground truth for one head: `landmarks` in the network-input frame mapped onto `grid` without rounding.
HeatmapStack encode_for_grid(const LandmarkSet& landmarks, const HeatmapGrid& grid, double sigma);

}  // namespace farnet
