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

#include <functional>

#include "farnet/autograd.hpp"
#include "farnet/errors.hpp"
#include "test_util.hpp"

using namespace farnet;
using farnet::testing::random_tensor;

namespace {

// L = sum(r * f(inputs)) with a fixed random r.
double weighted_sum(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * r[i];
  return s;
}

// Compares the analytic gradient of every input against central differences.
void check_gradients(const std::function<ag::Var(const std::vector<ag::Var>&)>& f, std::vector<Tensor> inputs,
                     double tol = 2e-2) {
  std::vector<ag::Var> vars;
  for (auto& t : inputs) vars.push_back(ag::parameter(t));
  const ag::Var out = f(vars);
  const Tensor r = random_tensor(out->value.dims(), 999);
  ag::backward(out, r);

  const float h = 1e-2f;
  for (std::size_t v = 0; v < inputs.size(); ++v) {
    const Tensor analytic = vars[v]->grad;
    REQUIRE(analytic.same_shape(inputs[v]));
    for (std::size_t i = 0; i < inputs[v].size(); ++i) {
      auto eval = [&](float delta) {
        std::vector<ag::Var> c;
        for (std::size_t u = 0; u < inputs.size(); ++u) {
          Tensor t = inputs[u];
          if (u == v) t[i] += delta;
          c.push_back(ag::constant(t));
        }
        ag::NoGradGuard g;
        return weighted_sum(f(c)->value, r);
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      CAPTURE(v);
      CAPTURE(i);
      CHECK(analytic[i] == doctest::Approx(numeric).epsilon(tol).scale(1.0));
    }
  }
}

}  // namespace

TEST_CASE("conv2d gradients") {
  check_gradients([](const auto& v) { return ag::conv2d(v[0], v[1], v[2], 1, 1); },
                  {random_tensor({2, 5, 4}, 1), random_tensor({3, 2, 3, 3}, 2), random_tensor({3}, 3)});
  check_gradients([](const auto& v) { return ag::conv2d(v[0], v[1], nullptr, 2, 1); },
                  {random_tensor({2, 6, 5}, 4), random_tensor({3, 2, 3, 3}, 5)});
}

TEST_CASE("sample norm gradients") {
  check_gradients([](const auto& v) { return ag::sample_norm(v[0], v[1], v[2]); },
                  {random_tensor({3, 4, 4}, 6, -2.0f, 2.0f), random_tensor({3}, 7, 0.5f, 1.5f), random_tensor({3}, 8)});
}

TEST_CASE("frozen norm gradients") {
  const Tensor mean = random_tensor({3}, 9);
  const Tensor var = random_tensor({3}, 10, 0.5f, 2.0f);
  check_gradients([&](const auto& v) { return ag::frozen_norm(v[0], v[1], v[2], mean, var); },
                  {random_tensor({3, 4, 4}, 11), random_tensor({3}, 12), random_tensor({3}, 13)});
}

TEST_CASE("upsample, concat, add, relu and pooling gradients") {
  check_gradients([](const auto& v) { return ag::upsample2x(v[0]); }, {random_tensor({2, 3, 4}, 14)});
  check_gradients([](const auto& v) { return ag::concat({v[0], v[1]}); },
                  {random_tensor({2, 3, 3}, 15), random_tensor({1, 3, 3}, 16)});
  check_gradients([](const auto& v) { return ag::add(v[0], v[1]); },
                  {random_tensor({2, 3, 3}, 17), random_tensor({2, 3, 3}, 18)});
  check_gradients([](const auto& v) { return ag::relu(v[0]); }, {random_tensor({2, 3, 3}, 19, 0.1f, 1.0f)});
  check_gradients([](const auto& v) { return ag::avg_pool2x2(v[0]); }, {random_tensor({2, 4, 6}, 20)});
  check_gradients([](const auto& v) { return ag::max_pool(v[0], 2, 2, 0); }, {random_tensor({1, 4, 4}, 21)});
}

TEST_CASE("a composed block back-propagates through shared inputs") {
  check_gradients(
      [](const auto& v) {
        const ag::Var a = ag::relu(ag::sample_norm(ag::conv2d(v[0], v[1], nullptr, 1, 1), v[2], v[3]));
        return ag::add(ag::upsample2x(ag::conv2d(a, v[4], nullptr, 2, 1)), a);
      },
      {random_tensor({2, 4, 4}, 22), random_tensor({3, 2, 3, 3}, 23), random_tensor({3}, 24, 0.5f, 1.5f),
       random_tensor({3}, 25), random_tensor({3, 3, 3, 3}, 26)},
      5e-2);
}

TEST_CASE("several roots in one backward pass") {
  const ag::Var x = ag::parameter(random_tensor({1, 2, 2}, 30));
  const ag::Var w = ag::parameter(random_tensor({1, 1, 1, 1}, 31));
  const ag::Var a = ag::conv2d(x, w, nullptr, 1, 0);
  const ag::Var b = ag::add(a, x);  // a is also an ancestor of b
  ag::backward({{a, Tensor({1, 2, 2}, 1.0f)}, {b, Tensor({1, 2, 2}, 1.0f)}});
  const float wv = w->value[0];
  for (std::size_t i = 0; i < 4; ++i) CHECK(x->grad[i] == doctest::Approx(2.0f * wv + 1.0f));
}

TEST_CASE("no-grad mode records nothing") {
  const ag::Var x = ag::parameter(random_tensor({1, 2, 2}, 40));
  ag::Var y;
  {
    ag::NoGradGuard g;
    CHECK_FALSE(ag::grad_enabled());
    y = ag::relu(x);
  }
  CHECK(ag::grad_enabled());
  CHECK_FALSE(y->requires_grad);
  CHECK(y->parents.empty());
}

TEST_CASE("mismatched shapes throw") {
  CHECK_THROWS_AS(ag::add(ag::constant(Tensor({1, 2, 2})), ag::constant(Tensor({1, 2, 3}))), ShapeError);
  CHECK_THROWS_AS(ag::concat({ag::constant(Tensor({1, 2, 2})), ag::constant(Tensor({1, 3, 2}))}), ShapeError);
  const ag::Var p = ag::parameter(Tensor({1, 2, 2}));
  CHECK_THROWS_AS(ag::backward(ag::relu(p), Tensor({1, 1, 1})), ShapeError);
}
