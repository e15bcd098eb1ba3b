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

// OpenMP kernels against the serial reference.
//
//   bench_kernels --benchmark_filter=Conv
//
// The last argument of each parallel benchmark is its OpenMP thread count.

#include <omp.h>

#include <random>

#include <benchmark/benchmark.h>

#include "farnet/kernels.hpp"
#include "farnet/reference_kernels.hpp"

using namespace farnet;

namespace {

Tensor random_tensor(std::vector<int> dims, unsigned seed) {
  Tensor t(std::move(dims));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// {channels in, channels out, spatial size, kernel, stride}
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({64, 64, 64, 3, 1})->Args({128, 128, 32, 3, 1})->Args({64, 128, 64, 3, 2})->Args({256, 64, 32, 1, 1});
}

void set_threads(const benchmark::State& state, int index) {
  omp_set_num_threads(static_cast<int>(state.range(index)));
}

void conv_flops(benchmark::State& state, const Tensor& x, const Tensor& w, int stride, int pad) {
  const auto g = kernels::conv_geometry(x, w, stride, pad);
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * g.out_c * g.out_h() * g.out_w() * g.in_c * g.kernel * g.kernel, benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::kIs1000);
}

void BM_ConvForward(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  const int n = static_cast<int>(state.range(2)), k = static_cast<int>(state.range(3));
  const int s = static_cast<int>(state.range(4));
  set_threads(state, 5);
  const Tensor x = random_tensor({cin, n, n}, 1), w = random_tensor({cout, cin, k, k}, 2);
  Tensor y;
  for (auto _ : state) {
    kernels::conv2d_forward(x, w, nullptr, s, k / 2, y);
    benchmark::DoNotOptimize(y.data());
  }
  conv_flops(state, x, w, s, k / 2);
}

void BM_ConvForwardReference(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  const int n = static_cast<int>(state.range(2)), k = static_cast<int>(state.range(3));
  const int s = static_cast<int>(state.range(4));
  const Tensor x = random_tensor({cin, n, n}, 1), w = random_tensor({cout, cin, k, k}, 2);
  for (auto _ : state) {
    Tensor y = reference::conv2d_forward(x, w, nullptr, s, k / 2);
    benchmark::DoNotOptimize(y.data());
  }
  conv_flops(state, x, w, s, k / 2);
}

void BM_ConvBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  set_threads(state, 2);
  const Tensor x = random_tensor({c, n, n}, 1), w = random_tensor({c, c, 3, 3}, 2), dy = random_tensor({c, n, n}, 3);
  Tensor dx({c, n, n}), dw({c, c, 3, 3});
  for (auto _ : state) {
    kernels::conv2d_backward_data(dy, w, 1, 1, dx);
    kernels::conv2d_backward_weight(x, dy, 1, 1, dw, nullptr);
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_ConvBackwardReference(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const Tensor x = random_tensor({c, n, n}, 1), w = random_tensor({c, c, 3, 3}, 2), dy = random_tensor({c, n, n}, 3);
  for (auto _ : state) {
    Tensor dx = reference::conv2d_backward_data(dy, w, n, n, 1, 1);
    Tensor dw = reference::conv2d_backward_weight(x, dy, 3, 1, 1);
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

void BM_Upsample(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  set_threads(state, 2);
  const Tensor x = random_tensor({c, n, n}, 1);
  Tensor y;
  for (auto _ : state) {
    kernels::upsample2x_forward(x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_UpsampleReference(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const Tensor x = random_tensor({c, n, n}, 1);
  for (auto _ : state) {
    Tensor y = reference::upsample2x_forward(x);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_SampleNorm(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  set_threads(state, 2);
  const Tensor x = random_tensor({c, n, n}, 1), g = random_tensor({c}, 2), b = random_tensor({c}, 3);
  Tensor y;
  kernels::NormCache cache;
  for (auto _ : state) {
    kernels::sample_norm_forward(x, g, b, 1e-5f, y, cache);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_SampleNormReference(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const Tensor x = random_tensor({c, n, n}, 1), g = random_tensor({c}, 2), b = random_tensor({c}, 3);
  for (auto _ : state) {
    Tensor y = reference::sample_norm_forward(x, g, b, 1e-5f);
    benchmark::DoNotOptimize(y.data());
  }
}

void with_threads(benchmark::internal::Benchmark* b, std::vector<std::vector<std::int64_t>> shapes) {
  const int hw = omp_get_num_procs();
  for (auto& s : shapes)
    for (int t = 1; t <= hw; t *= 2) {
      auto args = s;
      args.push_back(t);
      b->Args(args);
    }
}

}  // namespace

BENCHMARK(BM_ConvForward)->Apply([](auto* b) {
  with_threads(b, {{64, 64, 64, 3, 1}, {128, 128, 32, 3, 1}, {64, 128, 64, 3, 2}, {256, 64, 32, 1, 1}});
})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ConvForwardReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward)->Apply([](auto* b) { with_threads(b, {{64, 64}, {128, 32}}); })
    ->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ConvBackwardReference)->Args({64, 64})->Args({128, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Upsample)->Apply([](auto* b) { with_threads(b, {{64, 128}}); })->UseRealTime();
BENCHMARK(BM_UpsampleReference)->Args({64, 128});
BENCHMARK(BM_SampleNorm)->Apply([](auto* b) { with_threads(b, {{64, 128}}); })->UseRealTime();
BENCHMARK(BM_SampleNormReference)->Args({64, 128});

BENCHMARK_MAIN();
