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

#include "farnet/selftest.hpp"

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <optional>
#include <random>

#include <fmt/format.h>

#include "farnet/engine.hpp"
#include "farnet/errors.hpp"
#include "farnet/losses.hpp"
#include "farnet/metrics.hpp"

namespace farnet {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

HeatmapStack random_stack(std::mt19937_64& rng, int k, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HeatmapStack s(k, HeatmapGrid{w, h, 1});
  for (double& v : s.values()) v = u(rng);
  return s;
}

CriterionResult ewc_correctness() {
  CriterionResult r{1, "EWC correctness", false, "", 0.0, 1.0};
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const HeatmapStack pred = random_stack(rng, 3, 8, 8);
    const HeatmapStack gt = random_stack(rng, 3, 8, 8);
    worst = std::max(worst, std::abs(ewc_loss(pred, gt, 1.0) - l2_heatmap_loss(pred, gt)));
  }
  HeatmapStack y(1, HeatmapGrid{1, 1, 1}), yhat(1, HeatmapGrid{1, 1, 1});
  y.at(0, 0, 0) = 1.0;
  yhat.at(0, 0, 0) = 0.0;
  const double a = ewc_loss(yhat, y, 40.0);
  y.at(0, 0, 0) = 0.5;
  yhat.at(0, 0, 0) = 0.3;
  const double b = ewc_loss(yhat, y, 40.0);
  const double b_expected = 0.04 * std::sqrt(40.0);
  r.pass = worst <= 1e-12 && std::abs(a - 40.0) <= 1e-9 && std::abs(b - b_expected) <= 1e-9;
  r.detail = fmt::format("max |ewc(a=1) - l2| = {:.3g}; (1,0,40) -> {:.12g}; (0.5,0.3,40) -> {:.12g} (expected {:.12g})",
                         worst, a, b, b_expected);
  return r;
}

CriterionResult gradient_check() {
  CriterionResult r{2, "EWC gradient check", false, "", 0.0, 10.0};
  std::mt19937_64 rng(2);
  const double h = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    HeatmapStack pred = random_stack(rng, 3, 8, 8);
    const HeatmapStack gt = random_stack(rng, 3, 8, 8);
    const HeatmapStack g = ewc_loss_gradient(pred, gt, 40.0);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const double keep = pred.values()[j];
      pred.values()[j] = keep + h;
      const double up = ewc_loss(pred, gt, 40.0);
      pred.values()[j] = keep - h;
      const double down = ewc_loss(pred, gt, 40.0);
      pred.values()[j] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g.values()[j];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-300});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  r.pass = worst < 1e-4;
  r.detail = fmt::format("max relative error {:.3g} over 10 stacks of 3x8x8", worst);
  return r;
}

CriterionResult round_trip() {
  CriterionResult r{3, "encode/decode round trip", false, "", 0.0, 30.0};
  std::mt19937_64 rng(3);
  double worst = 0.0;
  int misses = 0, integer_misses = 0, total = 0;
  for (int size : {64, 128}) {
    const HeatmapGrid grid{size, size, 1};
    std::uniform_real_distribution<double> u(0.0, size - 1.0);
    std::uniform_int_distribution<int> ui(0, size - 1);
    LandmarkSet sub, integer;
    sub.frame = integer.frame = Frame::heatmap_L0;
    for (int i = 0; i < 200; ++i) {
      sub.points.push_back({u(rng), u(rng)});
      integer.points.push_back({static_cast<double>(ui(rng)), static_cast<double>(ui(rng))});
    }
    const LandmarkSet dec = decode_landmarks(encode_heatmap_stack(sub, grid, 10.0), {true, 1e-6});
    for (std::size_t i = 0; i < sub.size(); ++i) {
      const double e = std::hypot(dec.points[i].x - sub.points[i].x, dec.points[i].y - sub.points[i].y);
      worst = std::max(worst, e);
      misses += e <= 0.5 ? 0 : 1;
      ++total;
    }
    const LandmarkSet dec_int = decode_landmarks(encode_heatmap_stack(integer, grid, 10.0), {false, 1e-6});
    for (std::size_t i = 0; i < integer.size(); ++i)
      if (dec_int.points[i].x != integer.points[i].x || dec_int.points[i].y != integer.points[i].y) ++integer_misses;
  }
  r.pass = misses == 0 && integer_misses == 0;
  r.detail = fmt::format("{} sub-pixel landmarks, worst error {:.4f} px, {} beyond 0.5 px; {} integer landmarks not exact",
                         total, worst, misses, integer_misses);
  return r;
}

CriterionResult shape_suite() {
  CriterionResult r{4, "shape suite", false, "", 0.0, 120.0};
  const std::vector<Size2> sizes = {{128, 128}, {512, 512}, {640, 800}, {512, 1024}};
  const std::vector<int> ks = {4, 19, 37, 68};
  int checked = 0;
  std::vector<std::string> failures;
  ag::NoGradGuard no_grad;
  auto check = [&](const FarNet& net, Size2 s, const std::string& tag) {
    const int k = net.config().k_landmarks;
    const ForwardOutput out = net.forward(Tensor({3, s.height, s.width}, 0.5f));
    const std::vector<int> want_coarse{k, s.height / 2, s.width / 2};
    const std::vector<int> want_fine{k, s.height, s.width};
    ++checked;
    if (out.coarse->value.dims() != want_coarse || !out.fine || out.fine->value.dims() != want_fine)
      failures.push_back(fmt::format("{} K={} {}x{}: coarse {} fine {}", tag, k, s.height, s.width,
                                     out.coarse->value.shape_string(),
                                     out.fine ? out.fine->value.shape_string() : std::string("none")));
  };
  for (int k : ks) {
    ModelConfig mc;
    mc.backbone = BackboneKind::toy;
    mc.pretrained = false;
    mc.k_landmarks = k;
    const FarNet net(mc);
    for (Size2 s : sizes) check(net, s, "MSFA+FR");
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    for (auto [fusion, refinement, tag] : {std::tuple{Fusion::add, Refinement::guided, "MSFA(+)"},
                                           std::tuple{Fusion::concat, Refinement::naive, "FR*"}}) {
      ModelConfig mc;
      mc.backbone = BackboneKind::toy;
      mc.pretrained = false;
      mc.k_landmarks = ks[i];
      mc.fusion = fusion;
      mc.refinement = refinement;
      check(FarNet(mc), sizes[i], tag);
    }
  }
  r.pass = failures.empty();
  r.detail = failures.empty() ? fmt::format("{} forward passes with expected shapes", checked)
                              : fmt::format("{} mismatches, first: {}", failures.size(), failures.front());
  return r;
}

RunConfig overfit_config(const fs::path& dir) {
  RunConfig c;
  c.model.backbone = BackboneKind::toy;
  c.model.pretrained = false;
  c.model.k_landmarks = 4;
  c.model.seed = 5;
  c.loss.alpha = 40.0;
  c.dataset.kind = DatasetKind::synthetic;
  c.dataset.k_landmarks = 4;
  c.dataset.input_size = {128, 128};
  c.dataset.synthetic_count = 4;
  c.dataset.synthetic_seed = 5;
  c.optimizer.lr = 1e-4;
  c.sigma = 10.0;
  c.batch_size = 1;
  c.epochs = 75;
  c.max_iterations = 300;
  c.seed = 5;
  c.deterministic = true;
  c.checkpoint_dir = dir.string();
  return c;
}

struct OverfitRun {
  TrainResult result;
  EvalReport report;
  double seconds = 0.0;
};

OverfitRun run_overfit(const RunConfig& config) {
  OverfitRun run;
  const auto t0 = Clock::now();
  run.result = train(config);
  const std::vector<Sample> samples = load_dataset(config.dataset);
  run.report = evaluate_samples(samples, config.dataset, model_predictor(*run.result.net),
                                input_scaling(*run.result.net), config.decode);
  run.seconds = seconds_since(t0);
  return run;
}

CriterionResult toy_overfit(const OverfitRun& run) {
  CriterionResult r{5, "toy overfit", false, "", run.seconds, 600.0};
  const auto& losses = run.result.iteration_losses;
  const double first = losses.empty() ? 0.0 : losses.front().total;
  const double last = losses.empty() ? 0.0 : losses.back().total;
  r.pass = run.report.mre_mm < 2.0 && run.result.iterations <= 300;
  r.detail = fmt::format("{} iterations, training-set MRE {:.3f} px (need < 2), loss {:.6g} -> {:.6g}",
                         run.result.iterations, run.report.mre_mm, first, last);
  return r;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

CriterionResult determinism(const OverfitRun& first, const RunConfig& config, const fs::path& dir) {
  CriterionResult r{7, "determinism", false, "", 0.0, 600.0};
  const auto t0 = Clock::now();
  RunConfig again = config;
  again.checkpoint_dir = (dir / "run_b").string();
  const TrainResult second = train(again);
  const auto& a = first.result.iteration_losses;
  const auto& b = second.iteration_losses;
  std::size_t diverged = a.size() == b.size() ? a.size() : 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    if (std::memcmp(&a[i].total, &b[i].total, sizeof(double)) != 0) {
      diverged = i;
      break;
    }
  const bool curves_equal = a.size() == b.size() && diverged == a.size();

  const fs::path ckpt = dir / "probe.fnta";
  save_checkpoint(ckpt, config, *first.result.net, nullptr, {});
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const Sample probe = generate_synthetic(99, 1, 4, {128, 128}).front();
  const Tensor x = prepare_input(probe, config.dataset, input_scaling(*loaded.net)).image;
  ag::NoGradGuard guard;
  const ForwardOutput before = first.result.net->forward(x);
  const ForwardOutput after = loaded.net->forward(x);
  const bool probe_equal = same_bits(before.coarse->value, after.coarse->value) &&
                           same_bits(before.fine->value, after.fine->value);
  r.seconds = seconds_since(t0);
  r.pass = curves_equal && probe_equal;
  r.detail = fmt::format("loss curves {} ({} iterations); checkpoint round trip forward {}",
                         curves_equal ? "identical" : fmt::format("differ from iteration {}", diverged + 1), a.size(),
                         probe_equal ? "bit-identical" : "differs");
  return r;
}

double brute_mean(const std::vector<double>& v) {
  long double s = 0.0L;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

CriterionResult metric_oracles() {
  CriterionResult r{6, "metric oracles", false, "", 0.0, 60.0};
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  std::uniform_int_distribution<int> n_dist(1, 60);
  const std::vector<double> radii = {0.5, 1.0, 2.0, 2.5, 3.0, 4.0, 6.0};
  double worst = 0.0;
  bool monotone = true;
  for (int c = 0; c < 1000; ++c) {
    std::vector<double> e(static_cast<std::size_t>(n_dist(rng)));
    for (double& x : e) x = (c % 5 == 0) ? std::round(u(rng) * 2.0) / 2.0 : u(rng);
    const auto [mean, sd] = mre(e);
    const double m = brute_mean(e);
    long double sq = 0.0L;
    for (double x : e) sq += (static_cast<long double>(x) - m) * (static_cast<long double>(x) - m);
    const double sd_ref = std::sqrt(static_cast<double>(sq / e.size()));
    worst = std::max({worst, std::abs(mean - m), std::abs(sd - sd_ref)});
    const auto s = sdr(e, radii);
    double prev = -1.0;
    for (double rad : radii) {
      int hits = 0;
      for (double x : e) hits += x <= rad ? 1 : 0;
      worst = std::max(worst, std::abs(s.at(rad) - 100.0 * hits / static_cast<double>(e.size())));
      monotone = monotone && s.at(rad) >= prev;
      prev = s.at(rad);
    }

    // spine metrics on random sets
    const int images = 1 + c % 4, k = 1 + c % 7;
    std::vector<LandmarkSet> pred(images), gt(images);
    std::vector<Size2> sizes;
    long double sq_ref = 0.0L;
    std::vector<long double> pv, gv;
    for (int i = 0; i < images; ++i) {
      const Size2 sz{50 + 10 * (i + c % 3), 70 + 5 * i};
      sizes.push_back(sz);
      for (int j = 0; j < k; ++j) {
        const Point2 g{u(rng) * sz.width / 8.0, u(rng) * sz.height / 8.0};
        const Point2 p{g.x + u(rng) - 4.0, g.y + u(rng) - 4.0};
        gt[i].points.push_back(g);
        pred[i].points.push_back(p);
        const long double nx = (p.x - g.x) / static_cast<long double>(sz.width);
        const long double ny = (p.y - g.y) / static_cast<long double>(sz.height);
        sq_ref += nx * nx + ny * ny;
        pv.push_back(p.x / static_cast<long double>(sz.width));
        pv.push_back(p.y / static_cast<long double>(sz.height));
        gv.push_back(g.x / static_cast<long double>(sz.width));
        gv.push_back(g.y / static_cast<long double>(sz.height));
      }
    }
    const SpineMetrics sm = spine_metrics(pred, gt, sizes);
    const long double n = static_cast<long double>(pv.size());
    long double sp = 0, sg = 0, spp = 0, sgg = 0, spg = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      sp += pv[i];
      sg += gv[i];
      spp += pv[i] * pv[i];
      sgg += gv[i] * gv[i];
      spg += pv[i] * gv[i];
    }
    const long double cov = spg - sp * sg / n;
    const long double rho_ref = cov / std::sqrt((spp - sp * sp / n) * (sgg - sg * sg / n));
    worst = std::max({worst, std::abs(sm.mse_fraction - static_cast<double>(sq_ref / n)),
                      std::abs(sm.pearson_rho - static_cast<double>(rho_ref))});
  }

  // 10 px error per axis on a 100x100 image.
  std::vector<LandmarkSet> pred(1), gt(1);
  for (int j = 0; j < 8; ++j) {
    gt[0].points.push_back({20.0 + 5 * j, 30.0 + 3 * j});
    pred[0].points.push_back({30.0 + 5 * j, 40.0 + 3 * j});
  }
  const double calib = spine_metrics(pred, gt, {{100, 100}}).mse_fraction;

  r.pass = worst <= 1e-9 && monotone && calib == 0.010;
  r.detail = fmt::format("1000 cases, max deviation from brute force {:.3g}; SDR monotone: {}; calibration {:.17g}",
                         worst, monotone ? "yes" : "no", calib);
  return r;
}

CriterionResult coarse_to_fine_wiring() {
  CriterionResult r{8, "coarse-to-fine wiring", false, "", 0.0, 120.0};
  const Sample s = generate_synthetic(8, 1, 4, {128, 128}).front();
  DatasetSpec spec;
  spec.k_landmarks = 4;
  spec.input_size = {128, 128};

  ModelConfig mc;
  mc.backbone = BackboneKind::toy;
  mc.pretrained = false;
  mc.k_landmarks = 4;
  const FarNet guided(mc);
  const PreparedInput in = prepare_input(s, spec, input_scaling(guided));
  LossConfig lc;
  lc.w_coarse = 0.0;
  std::optional<LossBreakdown> zero_weight;
  {
    ag::NoGradGuard g;
    const ForwardOutput out = guided.forward(in.image);
    const HeatmapStack coarse = HeatmapStack::from_tensor(out.coarse->value, 2);
    const HeatmapStack fine = HeatmapStack::from_tensor(out.fine->value, 1);
    zero_weight = coarse_fine_loss(&coarse, &fine, in.landmarks_net, 10.0, lc);
  }
  const bool exact = zero_weight->total == zero_weight->fine && zero_weight->coarse > 0.0;

  std::vector<std::string> notes;
  bool naive_ok = true;
  for (int k : {4, 19, 68}) {
    ModelConfig nc = mc;
    nc.refinement = Refinement::naive;
    nc.k_landmarks = k;
    FarNet net(nc);
    const bool width_ok = net.fr_concat_channels() == 96;
    LandmarkSet lm;
    lm.frame = Frame::net_input;
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> u(8.0, 120.0);
    for (int i = 0; i < k; ++i) lm.points.push_back({u(rng), u(rng)});
    PreparedInput p = in;
    p.landmarks_net = lm;
    Adadelta opt(net.params(), {1e-4, 0.9, 1e-6});
    const ParamEntry* fine_w = net.params().find("fr.head.1.weight");
    const ParamEntry* coarse_w = net.params().find("msfa.head.1.weight");
    const Tensor before = fine_w->var->value;
    double first = 0.0, last = 0.0;
    bool coarse_untouched = true;
    for (int step = 0; step < 2; ++step) {
      net.params().zero_grad();
      const LossBreakdown l = accumulate_gradients(net, p, 10.0, LossConfig{});
      coarse_untouched = coarse_untouched && coarse_w->var->grad.empty() && l.coarse == 0.0;
      opt.step();
      (step == 0 ? first : last) = l.total;
    }
    const bool moved = !same_bits(before, fine_w->var->value);
    const bool ok = width_ok && coarse_untouched && moved && std::isfinite(first) && std::isfinite(last);
    naive_ok = naive_ok && ok;
    notes.push_back(fmt::format("K={}: width {}{}", k, net.fr_concat_channels(), ok ? "" : " (FAILED)"));
  }
  r.pass = exact && naive_ok;
  r.detail = fmt::format("w_coarse=0: total {:.17g} fine {:.17g} ({}); FR* {}", zero_weight->total,
                         zero_weight->fine, exact ? "equal" : "differ", fmt::join(notes, ", "));
  return r;
}

template <class Fn>
CriterionResult timed(int id, const char* name, double budget, Fn&& fn) {
  const auto t0 = Clock::now();
  CriterionResult r;
  try {
    r = fn();
  } catch (const std::exception& e) {
    r = CriterionResult{id, name, false, std::string("exception: ") + e.what(), 0.0, budget};
  }
  if (r.seconds == 0.0) r.seconds = seconds_since(t0);
  if (r.seconds > r.budget_seconds) {
    r.pass = false;
    r.detail += fmt::format("; over the {:.0f}s budget", r.budget_seconds);
  }
  return r;
}

}  // namespace

std::string format_result(const CriterionResult& r) {
  return fmt::format("[{}] criterion {} {} ({:.1f}s / {:.0f}s): {}", r.pass ? "PASS" : "FAIL", r.id, r.name,
                     r.seconds, r.budget_seconds, r.detail);
}

std::vector<CriterionResult> run_selftest(const SelftestOptions& options) {
  auto wanted = [&](int id) { return options.only.empty() || options.only.count(id) > 0; };
  fs::path dir = options.work_dir;
  if (dir.empty()) dir = fs::temp_directory_path() / fmt::format("farnet_selftest_{}", ::getpid());
  fs::create_directories(dir);

  std::vector<CriterionResult> out;
  auto emit = [&](CriterionResult r) {
    if (options.on_result) options.on_result(r);
    out.push_back(std::move(r));
  };
  if (wanted(1)) emit(timed(1, "EWC correctness", 1.0, ewc_correctness));
  if (wanted(2)) emit(timed(2, "EWC gradient check", 10.0, gradient_check));
  if (wanted(3)) emit(timed(3, "encode/decode round trip", 30.0, round_trip));
  if (wanted(4)) emit(timed(4, "shape suite", 120.0, shape_suite));

  std::optional<OverfitRun> overfit;
  const RunConfig cfg = overfit_config(dir / "run_a");
  if (wanted(5) || wanted(7)) {
    try {
      overfit = run_overfit(cfg);
    } catch (const std::exception& e) {
      for (int id : {5, 7})
        if (wanted(id))
          emit(CriterionResult{id, id == 5 ? "toy overfit" : "determinism", false,
                               std::string("training failed: ") + e.what(), 0.0, 600.0});
    }
  }
  if (wanted(5) && overfit) emit(timed(5, "toy overfit", 600.0, [&] { return toy_overfit(*overfit); }));
  if (wanted(6)) emit(timed(6, "metric oracles", 60.0, metric_oracles));
  if (wanted(7) && overfit) emit(timed(7, "determinism", 600.0, [&] { return determinism(*overfit, cfg, dir); }));
  if (wanted(8)) emit(timed(8, "coarse-to-fine wiring", 120.0, coarse_to_fine_wiring));
  std::sort(out.begin(), out.end(), [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
  return out;
}

}  // namespace farnet
