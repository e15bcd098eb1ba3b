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

// OpenMP-parallel compute kernels behind the network layers.
//
// Every kernel partitions its work into blocks whose size does not depend on
// the thread count, and every reduction runs in a fixed order, so results are
// bit-identical for any OMP_NUM_THREADS. All backward kernels accumulate into
// their output gradients (`+=`), they never overwrite.
//
// A serial double-precision counterpart of each kernel lives in
// reference_kernels.hpp and is used by the tests and the benchmark.

#pragma once

#include <cstdint>
#include <vector>

#include "farnet/tensor.hpp"

namespace farnet::kernels {

struct ConvGeometry {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0;
  int kernel = 1, stride = 1, pad = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// Validates `x` against `weight` (Cout x Cin x k x k) and returns the geometry.
ConvGeometry conv_geometry(const Tensor& x, const Tensor& weight, int stride, int pad);

/// y = conv(x, weight) + bias. `bias` may be null. `y` is (re)allocated.
void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad,
                    Tensor& y);
/// dx += conv^T(dy, weight).
void conv2d_backward_data(const Tensor& dy, const Tensor& weight, int stride, int pad, Tensor& dx);
/// dweight += dy (*) x ; dbias += sum(dy) when non-null.
void conv2d_backward_weight(const Tensor& x, const Tensor& dy, int stride, int pad, Tensor& dweight,
                            Tensor* dbias);

/// Bilinear x2 upsampling with half-pixel centers (align_corners = false).
void upsample2x_forward(const Tensor& x, Tensor& y);
void upsample2x_backward(const Tensor& dy, Tensor& dx);

/// Per-sample, per-channel normalization over H x W followed by an affine map.
struct NormCache {
  std::vector<float> mean;
  std::vector<float> inv_std;
};
void sample_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps, Tensor& y,
                         NormCache& cache);
void sample_norm_backward(const Tensor& x, const Tensor& dy, const Tensor& gamma, const NormCache& cache,
                          Tensor& dx, Tensor& dgamma, Tensor& dbeta);

/// Normalization with fixed statistics (inference-mode batch norm); gamma/beta stay trainable.
void frozen_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& mean,
                         const Tensor& var, float eps, Tensor& y);
void frozen_norm_backward(const Tensor& x, const Tensor& dy, const Tensor& gamma, const Tensor& mean,
                          const Tensor& var, float eps, Tensor& dx, Tensor& dgamma, Tensor& dbeta);

void relu_forward(const Tensor& x, Tensor& y);
/// dx += dy where y > 0.
void relu_backward(const Tensor& y, const Tensor& dy, Tensor& dx);

/// Max pooling; `argmax` receives the flat input index of every output element (-1 if the
/// window only covered padding).
void max_pool_forward(const Tensor& x, int kernel, int stride, int pad, Tensor& y,
                      std::vector<std::int32_t>& argmax);
void max_pool_backward(const Tensor& dy, const std::vector<std::int32_t>& argmax, Tensor& dx);

/// 2x2 stride-2 average pooling (odd trailing rows/columns are dropped).
void avg_pool2x2_forward(const Tensor& x, Tensor& y);
void avg_pool2x2_backward(const Tensor& dy, Tensor& dx);

/// Number of OpenMP threads the kernels will use.
int max_threads();

}  // namespace farnet::kernels
