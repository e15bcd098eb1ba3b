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
#include <filesystem>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

#include "farnet/data.hpp"
#include "farnet/errors.hpp"

using namespace farnet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("farnet_data_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_points(const fs::path& path, const std::vector<Point2>& pts) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  for (const auto& p : pts) out << p.x << "," << p.y << "\n";
}

void write_gray(const fs::path& path, int w, int h, int value = 128) {
  fs::create_directories(path.parent_path());
  cv::imwrite(path.string(), cv::Mat(h, w, CV_8U, cv::Scalar(value)));
}

std::vector<Point2> ramp(int k, double x0, double y0) {
  std::vector<Point2> p;
  for (int i = 0; i < k; ++i) p.push_back({x0 + i, y0 + 2 * i});
  return p;
}

cv::Mat blob(Size2 size, Point2 c, double sigma) {
  cv::Mat img(size.height, size.width, CV_32F);
  for (int y = 0; y < size.height; ++y)
    for (int x = 0; x < size.width; ++x)
      img.at<float>(y, x) =
          static_cast<float>(std::exp(-((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y)) / (2 * sigma * sigma)));
  return img;
}

Point2 centroid(const cv::Mat& img, Point2 near, int radius) {
  double sx = 0, sy = 0, sw = 0;
  for (int y = std::max(0, static_cast<int>(near.y) - radius); y <= std::min(img.rows - 1, static_cast<int>(near.y) + radius); ++y)
    for (int x = std::max(0, static_cast<int>(near.x) - radius); x <= std::min(img.cols - 1, static_cast<int>(near.x) + radius); ++x) {
      const double v = img.at<float>(y, x);
      sx += v * x;
      sy += v * y;
      sw += v;
    }
  return {sx / sw, sy / sw};
}

}  // namespace

TEST_CASE("cephalometric annotations are averaged across annotators") {
  const fs::path root = fresh_dir("ceph");
  for (int i = 0; i < 3; ++i) {
    const std::string id = fmt::format("{:03d}", i + 1);
    write_gray(root / "images" / (id + ".bmp"), 40, 30);
    write_points(root / "annotations/senior" / (id + ".txt"), ramp(19, 10, 4));
    write_points(root / "annotations/junior" / (id + ".txt"), ramp(19, 12, 8));
  }
  DatasetSpec spec;
  spec.kind = DatasetKind::cephalometric;
  spec.root_path = root.string();
  spec.k_landmarks = 19;
  spec.split = "all";
  const auto samples = load_dataset(spec);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].id == "001");
  CHECK(samples[0].original_size == Size2{40, 30});
  CHECK(samples[0].landmarks_original.points[0].x == 11.0);
  CHECK(samples[0].landmarks_original.points[0].y == 6.0);
  CHECK(samples[2].landmarks_original.points[18].x == 29.0);
  CHECK(samples[0].spacing.scale() == doctest::Approx(0.1));
  CHECK(sample_image(samples[0]).at<float>(0, 0) == doctest::Approx(128.0 / 255.0));

  spec.split = "train";
  CHECK(load_dataset(spec).size() == 3);
  spec.split = "test";
  CHECK(load_dataset(spec).empty());

  write_points(root / "annotations/junior/002.txt", ramp(18, 0, 0));
  spec.split = "all";
  CHECK_THROWS_AS(load_dataset(spec), DataError);
  fs::remove(root / "annotations/junior/002.txt");
  CHECK_THROWS_AS(load_dataset(spec), DataError);
}

TEST_CASE("annotator averaging is a midpoint and order-independent") {
  const fs::path root = fresh_dir("ceph_mid");
  std::vector<Point2> a(19, Point2{100, 200}), b(19, Point2{102, 204});
  write_gray(root / "images/001.png", 32, 32);
  write_points(root / "annotations/senior/001.txt", a);
  write_points(root / "annotations/junior/001.txt", b);
  DatasetSpec spec;
  spec.kind = DatasetKind::cephalometric;
  spec.root_path = root.string();
  spec.k_landmarks = 19;
  spec.split = "all";
  const Point2 m = load_cephalometric(spec)[0].landmarks_original.points[0];
  CHECK(m.x == 101.0);
  CHECK(m.y == 202.0);
  std::swap(spec.annotator_dirs[0], spec.annotator_dirs[1]);
  const Point2 m2 = load_cephalometric(spec)[0].landmarks_original.points[0];
  CHECK(m2.x == m.x);
  CHECK(m2.y == m.y);
  spec.annotator_dirs = {"annotations/senior", "annotations/senior"};
  CHECK(load_cephalometric(spec)[0].landmarks_original.points[0].x == 100.0);
}

TEST_CASE("hand spacing normalizes by wrist width") {
  const fs::path root = fresh_dir("hand");
  std::vector<Point2> pts(37, Point2{50, 50});
  pts[0] = {100, 300};
  pts[1] = {300, 300};  // 200 px apart
  for (int i = 0; i < 4; ++i) {
    write_gray(root / "images" / fmt::format("h{}.png", i), 64, 64);
    write_points(root / "annotations" / fmt::format("h{}.txt", i), pts);
  }
  DatasetSpec spec;
  spec.kind = DatasetKind::hand;
  spec.root_path = root.string();
  spec.k_landmarks = 37;
  spec.split = "all";
  CHECK_THROWS_AS(load_dataset(spec), DataError);
  spec.wrist_landmarks = {0, 1};
  const auto all = load_dataset(spec);
  REQUIRE(all.size() == 4);
  CHECK(all[0].spacing.scale() == doctest::Approx(0.25));

  spec.fold = 1;
  spec.split = "test";
  const auto held = load_dataset(spec);
  REQUIRE(held.size() == 1);
  CHECK(held[0].id == "h1");
  spec.split = "train";
  CHECK(load_dataset(spec).size() == 3);
}

TEST_CASE("spine split is seeded and disjoint") {
  const fs::path root = fresh_dir("spine");
  const std::vector<Point2> pts = ramp(68, 1, 1);
  for (int i = 0; i < 481; ++i) {
    write_gray(root / "images" / fmt::format("s{:04d}.png", i), 4, 4);
    write_points(root / "annotations" / fmt::format("s{:04d}.txt", i), pts);
  }
  DatasetSpec spec;
  spec.kind = DatasetKind::spine;
  spec.root_path = root.string();
  spec.k_landmarks = 68;
  spec.split_seed = 17;
  spec.split = "train";
  const auto train = load_dataset(spec);
  spec.split = "test";
  const auto test = load_dataset(spec);
  CHECK(train.size() == 431);
  CHECK(test.size() == 50);
  std::set<std::string> ids;
  for (const auto& s : train) ids.insert(s.id);
  for (const auto& s : test) CHECK(ids.insert(s.id).second);
  CHECK(ids.size() == 481);
  CHECK(test[0].spacing.unit() == "px");

  const auto again = load_dataset(spec);
  for (std::size_t i = 0; i < test.size(); ++i) CHECK(again[i].id == test[i].id);
  spec.split_seed = 18;
  const auto other = load_dataset(spec);
  bool differs = false;
  for (std::size_t i = 0; i < test.size(); ++i) differs = differs || other[i].id != test[i].id;
  CHECK(differs);

  spec.split = "val";
  spec.spine_val_count = 20;
  CHECK(load_dataset(spec).size() == 20);
  spec.split = "train";
  CHECK(load_dataset(spec).size() == 411);

  const fs::path manifest = write_split_manifest(root / "manifests", spec, train);
  CHECK(manifest.filename() == "spine_train.txt");
  std::ifstream in(manifest);
  std::string first;
  std::getline(in, first);
  CHECK(first == train[0].id);
}

TEST_CASE("spec validation") {
  DatasetSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.input_size = {100, 128};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.kind = DatasetKind::cephalometric;
  spec.root_path = "x";
  spec.k_landmarks = 18;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.k_landmarks = 19;
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.radii() == std::vector<double>{2.0, 2.5, 3.0, 4.0});
  spec.split = "dev";
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  CHECK(dataset_kind_from_string("hand") == DatasetKind::hand);
}

TEST_CASE("prepared landmarks map back to the original frame") {
  Sample s;
  s.id = "a";
  s.image = cv::Mat(300, 250, CV_32F, cv::Scalar(0.5));
  s.original_size = {250, 300};
  s.landmarks_original.frame = Frame::original;
  s.landmarks_original.points = {{0, 0}, {249, 299}, {123.456, 7.89}};
  DatasetSpec spec;
  spec.input_size = {128, 160};
  const PreparedInput p = prepare_input(s, spec, InputScaling::imagenet);
  CHECK(p.image.dims() == std::vector<int>{3, 160, 128});
  CHECK(p.image.at(0, 5, 5) == doctest::Approx((0.5 - 0.485) / 0.229));
  CHECK(p.image.at(2, 5, 5) == doctest::Approx((0.5 - 0.406) / 0.225));
  CHECK(p.landmarks_net.frame == Frame::net_input);
  const LandmarkSet back = map_coordinates(p.landmarks_net, p.to_net.inverse());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(back.points[i].x - s.landmarks_original.points[i].x) < 1e-6);
    CHECK(std::abs(back.points[i].y - s.landmarks_original.points[i].y) < 1e-6);
  }
  CHECK(prepare_image(s.image, {64, 64}, InputScaling::unit).at(1, 3, 3) == doctest::Approx(0.5));
}

TEST_CASE("resizing keeps structures where the coordinate map puts them") {
  const Point2 c{100.3, 60.7};
  const cv::Mat img = blob({256, 192}, c, 6.0);
  for (Size2 target : {Size2{128, 96}, Size2{64, 64}, Size2{512, 384}}) {
    const cv::Mat small = resize_to(img, target);
    const double sx = static_cast<double>(target.width) / 256, sy = static_cast<double>(target.height) / 192;
    const Point2 expect{c.x * sx, c.y * sy};
    const Point2 got = centroid(small, expect, static_cast<int>(30 * std::max(sx, sy)) + 3);
    CAPTURE(target.width);
    CHECK(std::abs(got.x - expect.x) < 0.1);
    CHECK(std::abs(got.y - expect.y) < 0.1);
  }
}

TEST_CASE("identity and translation augmentations") {
  Sample s = generate_synthetic(3, 1, 4, {128, 128})[0];
  const Sample same = apply_affine(s, {});
  CHECK(cv::norm(same.image, s.image, cv::NORM_INF) < 1e-6);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same.landmarks_original.points[i].x == s.landmarks_original.points[i].x);

  AffineParams t;
  t.tx = 5;
  t.ty = -3;
  const Sample moved = apply_affine(s, t);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(moved.landmarks_original.points[i].x == doctest::Approx(s.landmarks_original.points[i].x + 5));
    CHECK(moved.landmarks_original.points[i].y == doctest::Approx(s.landmarks_original.points[i].y - 3));
  }
  CHECK(moved.image.at<float>(50, 60) == doctest::Approx(s.image.at<float>(53, 55)).epsilon(1e-5));

  AugmentConfig off;
  const Sample untouched = augment(s, off, 7);
  CHECK(cv::norm(untouched.image, s.image, cv::NORM_INF) == 0.0);
}

TEST_CASE("ninety degree rotation moves pixels and landmarks together") {
  Sample s;
  s.id = "r";
  s.original_size = {64, 64};
  s.image = cv::Mat(64, 64, CV_32F, cv::Scalar(0.0));
  s.image.at<float>(10, 20) = 1.0f;  // (x=20, y=10)
  s.landmarks_original.points = {{20, 10}};
  AffineParams r;
  r.rotate_deg = 90;
  const Sample out = apply_affine(s, r);
  const Point2 q = out.landmarks_original.points[0];
  CHECK(q.x == doctest::Approx(10.0));
  CHECK(q.y == doctest::Approx(43.0));
  CHECK(out.image.at<float>(43, 10) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(out.landmarks_original.visibility[0]);
}

TEST_CASE("landmarks leaving the frame become invisible") {
  Sample s = generate_synthetic(1, 1, 2, {64, 64})[0];
  AffineParams t;
  t.tx = 200;
  const Sample out = apply_affine(s, t);
  CHECK_FALSE(out.landmarks_original.visibility[0]);
  CHECK_FALSE(out.landmarks_original.visibility[1]);
}

TEST_CASE("random augmentations keep patterns at their landmarks") {
  Sample s;
  s.id = "b";
  s.original_size = {128, 128};
  s.landmarks_original.points = {{60.4, 70.2}};
  s.image = blob(s.original_size, s.landmarks_original.points[0], 3.0);
  AugmentConfig cfg;
  cfg.enabled = true;
  cfg.intensity_jitter = 0.0;
  cfg.seed = 9;
  for (std::uint64_t stream = 0; stream < 10; ++stream) {
    const Sample a = augment(s, cfg, stream);
    const Point2 q = a.landmarks_original.points[0];
    const Point2 c = centroid(a.image, q, 14);
    CAPTURE(stream);
    CHECK(std::hypot(c.x - q.x, c.y - q.y) < 0.5);
  }
  const AffineParams p1 = sample_affine(cfg, {128, 128}, 3), p2 = sample_affine(cfg, {128, 128}, 3);
  CHECK(p1.rotate_deg == p2.rotate_deg);
  CHECK(std::abs(p1.rotate_deg) <= 15.0);
  CHECK(p1.scale >= 0.85);
  CHECK(p1.scale <= 1.15);
  CHECK(std::abs(p1.tx) <= 0.03 * 128);
}

TEST_CASE("synthetic data is deterministic and in bounds") {
  const auto a = generate_synthetic(42, 3, 19, {128, 128});
  const auto b = generate_synthetic(42, 3, 19, {128, 128});
  const auto c = generate_synthetic(43, 3, 19, {128, 128});
  REQUIRE(a.size() == 3);
  CHECK(a[1].id == "synthetic_001");
  CHECK(cv::norm(a[2].image, b[2].image, cv::NORM_INF) == 0.0);
  CHECK(a[0].landmarks_original.points[3].x != c[0].landmarks_original.points[3].x);
  double lo, hi;
  cv::minMaxLoc(a[0].image, &lo, &hi);
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  for (const auto& s : a)
    for (const auto& p : s.landmarks_original.points) {
      CHECK(p.x >= 0);
      CHECK(p.x <= 127);
      CHECK(p.y >= 0);
      CHECK(p.y <= 127);
    }
  CHECK(a[0].spacing.scale() == 1.0);
  CHECK_THROWS_AS(generate_synthetic(1, 1, 68, {64, 64}), DataError);
}

TEST_CASE("blob patterns are centred on their landmarks") {
  const Sample s = generate_synthetic(8, 1, 1, {128, 128})[0];
  const Point2 p = s.landmarks_original.points[0];
  cv::Mat flat = s.image.clone();
  const Point2 c = centroid(flat - 0.08, p, 6);
  CHECK(std::hypot(c.x - p.x, c.y - p.y) < 0.5);
}
