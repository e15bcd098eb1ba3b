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
#include <omp.h>

#include <cmath>
#include <limits>

#include "farnet/errors.hpp"
#include "farnet/kernels.hpp"
#include "farnet/reference_kernels.hpp"
#include "test_util.hpp"

using namespace farnet;
using farnet::testing::bit_equal;
using farnet::testing::max_abs;
using farnet::testing::max_abs_diff;
using farnet::testing::random_tensor;

namespace {

struct ConvCase {
  int in_c, out_c, h, w, k, stride;
};

const ConvCase kCases[] = {
    {3, 5, 7, 9, 3, 1},  {4, 6, 8, 7, 3, 2},   {2, 3, 9, 6, 7, 2},  {5, 4, 6, 6, 1, 1},
    {3, 3, 5, 5, 1, 2},  {16, 8, 12, 10, 3, 1}, {1, 1, 1, 1, 3, 1}, {70, 130, 5, 4, 3, 2},
};

}  // namespace

TEST_CASE("conv2d forward matches the serial reference") {
  std::uint64_t seed = 1;
  for (const auto& c : kCases) {
    CAPTURE(c.in_c);
    CAPTURE(c.k);
    CAPTURE(c.stride);
    const Tensor x = random_tensor({c.in_c, c.h, c.w}, seed++);
    const Tensor w = random_tensor({c.out_c, c.in_c, c.k, c.k}, seed++);
    const Tensor b = random_tensor({c.out_c}, seed++);
    Tensor y;
    kernels::conv2d_forward(x, w, &b, c.stride, c.k / 2, y);
    const Tensor ref = reference::conv2d_forward(x, w, &b, c.stride, c.k / 2);
    CHECK(max_abs_diff(y, ref) <= 1e-5 * std::max(1.0, max_abs(ref)));
  }
}

TEST_CASE("conv2d backward passes match the serial reference") {
  std::uint64_t seed = 100;
  for (const auto& c : kCases) {
    CAPTURE(c.in_c);
    CAPTURE(c.k);
    CAPTURE(c.stride);
    const int pad = c.k / 2;
    const Tensor x = random_tensor({c.in_c, c.h, c.w}, seed++);
    const Tensor w = random_tensor({c.out_c, c.in_c, c.k, c.k}, seed++);
    Tensor y;
    kernels::conv2d_forward(x, w, nullptr, c.stride, pad, y);
    const Tensor dy = random_tensor(y.dims(), seed++);

    Tensor dx(x.dims());
    kernels::conv2d_backward_data(dy, w, c.stride, pad, dx);
    const Tensor dx_ref = reference::conv2d_backward_data(dy, w, c.h, c.w, c.stride, pad);
    CHECK(max_abs_diff(dx, dx_ref) <= 1e-5 * std::max(1.0, max_abs(dx_ref)));

    Tensor dw(w.dims());
    Tensor db({c.out_c});
    kernels::conv2d_backward_weight(x, dy, c.stride, pad, dw, &db);
    const Tensor dw_ref = reference::conv2d_backward_weight(x, dy, c.k, c.stride, pad);
    CHECK(max_abs_diff(dw, dw_ref) <= 1e-5 * std::max(1.0, max_abs(dw_ref)));
    for (int co = 0; co < c.out_c; ++co) {
      double s = 0.0;
      for (std::size_t i = 0; i < dy.plane(); ++i) s += dy.channel(co)[i];
      CHECK(db[static_cast<std::size_t>(co)] == doctest::Approx(s).epsilon(1e-5));
    }
  }
}

TEST_CASE("backward kernels accumulate into existing gradients") {
  const Tensor x = random_tensor({3, 6, 6}, 7);
  const Tensor w = random_tensor({4, 3, 3, 3}, 8);
  Tensor y;
  kernels::conv2d_forward(x, w, nullptr, 1, 1, y);
  const Tensor dy = random_tensor(y.dims(), 9);
  Tensor once(x.dims()), twice(x.dims());
  kernels::conv2d_backward_data(dy, w, 1, 1, once);
  kernels::conv2d_backward_data(dy, w, 1, 1, twice);
  kernels::conv2d_backward_data(dy, w, 1, 1, twice);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-6));
}

TEST_CASE("upsampling forward and backward match the reference") {
  const Tensor x = random_tensor({3, 5, 7}, 11);
  Tensor y;
  kernels::upsample2x_forward(x, y);
  CHECK(y.dims() == std::vector<int>{3, 10, 14});
  CHECK(max_abs_diff(y, reference::upsample2x_forward(x)) <= 1e-6);
  const Tensor dy = random_tensor(y.dims(), 12);
  Tensor dx(x.dims());
  kernels::upsample2x_backward(dy, dx);
  CHECK(max_abs_diff(dx, reference::upsample2x_backward(dy)) <= 1e-5);
}

TEST_CASE("upsampling keeps constants and interpolates a ramp") {
  Tensor c({1, 4, 4}, 2.5f);
  Tensor y;
  kernels::upsample2x_forward(c, y);
  for (float v : y.values()) CHECK(v == doctest::Approx(2.5f));

  Tensor ramp({1, 1, 4});
  for (int i = 0; i < 4; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<float>(i);
  kernels::upsample2x_forward(ramp, y);
  // output x maps to input (x + 0.5) / 2 - 0.5, clamped at the borders
  const float expected[] = {0.0f, 0.25f, 0.75f, 1.25f, 1.75f, 2.25f, 2.75f, 3.0f};
  for (int i = 0; i < 8; ++i) CHECK(y[static_cast<std::size_t>(i)] == doctest::Approx(expected[i]));
}

TEST_CASE("sample normalization matches the explicit Jacobian") {
  const Tensor x = random_tensor({4, 5, 6}, 21, -2.0f, 3.0f);
  const Tensor gamma = random_tensor({4}, 22, 0.5f, 1.5f);
  const Tensor beta = random_tensor({4}, 23);
  Tensor y;
  kernels::NormCache cache;
  kernels::sample_norm_forward(x, gamma, beta, 1e-5f, y, cache);
  CHECK(max_abs_diff(y, reference::sample_norm_forward(x, gamma, beta, 1e-5f)) <= 1e-5);

  const Tensor dy = random_tensor(y.dims(), 24);
  Tensor dx(x.dims()), dg({4}), db({4});
  kernels::sample_norm_backward(x, dy, gamma, cache, dx, dg, db);
  Tensor rdg({4}), rdb({4});
  const Tensor rdx = reference::sample_norm_backward(x, dy, gamma, 1e-5f, rdg, rdb);
  CHECK(max_abs_diff(dx, rdx) <= 1e-4);
  CHECK(max_abs_diff(dg, rdg) <= 1e-4);
  CHECK(max_abs_diff(db, rdb) <= 1e-4);
}

TEST_CASE("pooling matches the reference") {
  const Tensor x = random_tensor({3, 9, 8}, 31);
  Tensor y;
  std::vector<std::int32_t> argmax;
  kernels::max_pool_forward(x, 3, 2, 1, y, argmax);
  CHECK(max_abs_diff(y, reference::max_pool_forward(x, 3, 2, 1)) == 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(x[static_cast<std::size_t>(argmax[i])] == y[i]);

  kernels::avg_pool2x2_forward(x, y);
  CHECK(y.dims() == std::vector<int>{3, 4, 4});
  CHECK(max_abs_diff(y, reference::avg_pool2x2_forward(x)) <= 1e-6);
}

TEST_CASE("relu backward gates on the output") {
  Tensor x({1, 1, 4});
  const float xs[] = {-1.0f, 0.0f, 2.0f, -3.0f};
  for (int i = 0; i < 4; ++i) x[static_cast<std::size_t>(i)] = xs[i];
  Tensor y;
  kernels::relu_forward(x, y);
  Tensor dy({1, 1, 4}, 1.0f), dx({1, 1, 4});
  kernels::relu_backward(y, dy, dx);
  CHECK(dx[0] == 0.0f);
  CHECK(dx[1] == 0.0f);
  CHECK(dx[2] == 1.0f);
  CHECK(dx[3] == 0.0f);
}

TEST_CASE("relu propagates NaN") {
  Tensor x({1, 1, 2});
  x[0] = std::numeric_limits<float>::quiet_NaN();
  x[1] = -1.0f;
  Tensor y;
  kernels::relu_forward(x, y);
  CHECK(std::isnan(y[0]));
  CHECK(y[1] == 0.0f);
}

TEST_CASE("parallel kernels give identical bits for any thread count") {
  const Tensor x = random_tensor({40, 33, 29}, 41);
  const Tensor w = random_tensor({150, 40, 3, 3}, 42);
  const int saved = omp_get_max_threads();
  Tensor y1, y4;
  omp_set_num_threads(1);
  kernels::conv2d_forward(x, w, nullptr, 1, 1, y1);
  Tensor dw1(w.dims());
  kernels::conv2d_backward_weight(x, y1, 1, 1, dw1, nullptr);
  omp_set_num_threads(4);
  kernels::conv2d_forward(x, w, nullptr, 1, 1, y4);
  Tensor dw4(w.dims());
  kernels::conv2d_backward_weight(x, y4, 1, 1, dw4, nullptr);
  omp_set_num_threads(saved);
  CHECK(bit_equal(y1, y4));
  CHECK(bit_equal(dw1, dw4));
}

TEST_CASE("shape errors are reported") {
  Tensor y;
  CHECK_THROWS_AS(kernels::conv2d_forward(Tensor({3, 4, 4}), Tensor({2, 4, 3, 3}), nullptr, 1, 1, y), ShapeError);
  Tensor dx({3, 4, 4});
  CHECK_THROWS_AS(kernels::conv2d_backward_data(Tensor({2, 3, 3}), Tensor({2, 3, 3, 3}), 1, 1, dx), ShapeError);
}
