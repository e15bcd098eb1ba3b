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

// Serial, double-accumulating, loop-per-definition versions of the kernels in
// kernels.hpp. Slow on purpose; kept as the test oracle and the benchmark
// baseline. Backward functions here return fresh gradients instead of
// accumulating.

#pragma once

#include "farnet/tensor.hpp"

namespace farnet::reference {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad);
Tensor conv2d_backward_data(const Tensor& dy, const Tensor& weight, int in_h, int in_w, int stride, int pad);
Tensor conv2d_backward_weight(const Tensor& x, const Tensor& dy, int kernel, int stride, int pad);

Tensor upsample2x_forward(const Tensor& x);
Tensor upsample2x_backward(const Tensor& dy);

Tensor sample_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);
/// Returns dx; dgamma and dbeta are written to the out-parameters.
Tensor sample_norm_backward(const Tensor& x, const Tensor& dy, const Tensor& gamma, float eps, Tensor& dgamma,
                            Tensor& dbeta);

Tensor max_pool_forward(const Tensor& x, int kernel, int stride, int pad);
Tensor avg_pool2x2_forward(const Tensor& x);

}  // namespace farnet::reference
