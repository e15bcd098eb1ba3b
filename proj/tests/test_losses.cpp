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

#include <doctest.h>

#include <cmath>
#include <random>

#include "farnet/errors.hpp"
#include "farnet/losses.hpp"

using namespace farnet;

namespace {

HeatmapStack random_stack(int k, HeatmapGrid g, std::uint64_t seed) {
  HeatmapStack s(k, g);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : s.values()) v = u(rng);
  return s;
}

LandmarkSet net_points(std::vector<Point2> pts) {
  LandmarkSet s;
  s.frame = Frame::net_input;
  s.points = std::move(pts);
  return s;
}

}  // namespace

TEST_CASE("ewc on hand-computed pixels") {
  HeatmapStack pred(1, {2, 1, 1});
  HeatmapStack gt(1, {2, 1, 1});
  gt.at(0, 0, 0) = 1.0;  // weight 40
  pred.at(0, 0, 0) = 0.5;
  gt.at(0, 0, 1) = 0.0;  // weight 1
  pred.at(0, 0, 1) = 0.2;
  const double expected = (0.25 * 40.0 + 0.04 * 1.0) / 2.0;
  CHECK(ewc_loss(pred, gt, 40.0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(l2_heatmap_loss(pred, gt) == doctest::Approx((0.25 + 0.04) / 2.0).epsilon(1e-14));
}

TEST_CASE("ewc with alpha 1 equals l2") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const HeatmapStack p = random_stack(3, {7, 5, 1}, seed);
    const HeatmapStack g = random_stack(3, {7, 5, 1}, seed + 100);
    CHECK(std::abs(ewc_loss(p, g, 1.0) - l2_heatmap_loss(p, g)) <= 1e-12);
  }
}

TEST_CASE("ewc is bounded by l2 and alpha times l2") {
  const HeatmapStack p = random_stack(2, {9, 9, 1}, 7);
  const HeatmapStack g = random_stack(2, {9, 9, 1}, 8);
  const double l2 = l2_heatmap_loss(p, g);
  const double e = ewc_loss(p, g, 40.0);
  CHECK(e >= l2);
  CHECK(e <= 40.0 * l2);
  CHECK(ewc_loss(g, g, 40.0) == 0.0);
}

TEST_CASE("ewc gradient matches finite differences") {
  const HeatmapStack p = random_stack(2, {4, 3, 1}, 1);
  const HeatmapStack g = random_stack(2, {4, 3, 1}, 2);
  const HeatmapStack grad = ewc_loss_gradient(p, g, 40.0);
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.size(); ++i) {
    HeatmapStack a = p, b = p;
    a.values()[i] += h;
    b.values()[i] -= h;
    const double fd = (ewc_loss(a, g, 40.0) - ewc_loss(b, g, 40.0)) / (2 * h);
    CHECK(grad.values()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("loss arguments are validated") {
  const HeatmapStack p = random_stack(2, {4, 4, 1}, 1);
  const HeatmapStack q = random_stack(3, {4, 4, 1}, 1);
  CHECK_THROWS_AS(ewc_loss(p, q, 40.0), ShapeError);
  CHECK_THROWS_AS(l2_heatmap_loss(p, q), ShapeError);
  CHECK_THROWS_AS(ewc_loss(p, p, 0.5), ParameterError);

  LossConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha = 0.9;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.w_coarse = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.w_coarse = 0;
  c.w_fine = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("coarse and fine terms are weighted and encoded per grid") {
  const LandmarkSet lm = net_points({{10.0, 12.0}, {30.5, 3.25}});
  const HeatmapStack fine = random_stack(2, {32, 32, 1}, 3);
  const HeatmapStack coarse = random_stack(2, {16, 16, 2}, 4);
  LossConfig c;
  c.w_coarse = 0.3;
  c.w_fine = 2.0;
  const LossBreakdown b = coarse_fine_loss(&coarse, &fine, lm, 4.0, c);

  LandmarkSet half = lm;
  for (auto& p : half.points) p = {p.x / 2, p.y / 2};
  half.frame = Frame::heatmap_L1;
  CHECK(b.coarse == doctest::Approx(ewc_loss(coarse, encode_heatmap_stack(half, {16, 16, 2}, 4.0), 40.0)));
  LandmarkSet full = lm;
  full.frame = Frame::heatmap_L0;
  CHECK(b.fine == doctest::Approx(ewc_loss(fine, encode_heatmap_stack(full, {32, 32, 1}, 4.0), 40.0)));
  CHECK(b.total == doctest::Approx(0.3 * b.coarse + 2.0 * b.fine));

  c.w_coarse = 0.0;
  const LossBreakdown f = coarse_fine_loss(&coarse, &fine, lm, 4.0, c);
  CHECK(f.total == 2.0 * f.fine);
  const LossBreakdown none = coarse_fine_loss(nullptr, &fine, lm, 4.0, c);
  CHECK(none.coarse == 0.0);
  CHECK(none.fine == f.fine);
}

TEST_CASE("coarse and fine gradients scale with head weights") {
  const LandmarkSet lm = net_points({{5.0, 6.0}});
  const HeatmapStack fine = random_stack(1, {16, 16, 1}, 5);
  const HeatmapStack coarse = random_stack(1, {8, 8, 2}, 6);
  LossConfig c;
  c.w_coarse = 0.5;
  const CoarseFineResult r = coarse_fine_loss_with_grad(&coarse, &fine, lm, 2.0, c);
  REQUIRE(r.coarse_grad);
  REQUIRE(r.fine_grad);
  LandmarkSet half = lm;
  half.points[0] = {2.5, 3.0};
  half.frame = Frame::heatmap_L1;
  const HeatmapStack gc = ewc_loss_gradient(coarse, encode_heatmap_stack(half, {8, 8, 2}, 2.0), 40.0);
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(r.coarse_grad->values()[i] == doctest::Approx(0.5 * gc.values()[i]));
  CHECK(r.loss.total == doctest::Approx(coarse_fine_loss(&coarse, &fine, lm, 2.0, c).total));
}

TEST_CASE("head grids must have the right strides") {
  const LandmarkSet lm = net_points({{5.0, 6.0}});
  const HeatmapStack fine = random_stack(1, {16, 16, 1}, 5);
  const HeatmapStack wrong = random_stack(1, {8, 8, 1}, 6);
  const HeatmapStack coarse_bad = random_stack(1, {6, 8, 2}, 6);
  CHECK_THROWS_AS(coarse_fine_loss(&wrong, &fine, lm, 2.0, {}), ConfigError);
  CHECK_THROWS_AS(coarse_fine_loss(&coarse_bad, &fine, lm, 2.0, {}), ConfigError);
}
