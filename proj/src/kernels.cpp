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

#include "farnet/kernels.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "farnet/errors.hpp"

namespace farnet::kernels {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MutMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Output rows handed to one thread per GEMM. Fixed so that the per-element
// summation order never depends on the thread count.
constexpr int kRowBlock = 64;
// Upper bound on the im2col scratch buffer, in floats (16 MiB).
constexpr std::size_t kScratchFloats = std::size_t{1} << 22;

int row_blocks(int rows) { return (rows + kRowBlock - 1) / kRowBlock; }

// C[M x N] (+)= A[M x K] * B[K x N]
void gemm_nn(const float* a, int m, int k, int lda, const float* b, int n, int ldb, float* c, int ldc,
             bool accumulate) {
  const ConstMap bm(b, k, n, Eigen::OuterStride<>(ldb));
  const int blocks = row_blocks(m);
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int r0 = blk * kRowBlock;
    const int rows = std::min(kRowBlock, m - r0);
    const ConstMap am(a + static_cast<std::ptrdiff_t>(r0) * lda, rows, k, Eigen::OuterStride<>(lda));
    MutMap cm(c + static_cast<std::ptrdiff_t>(r0) * ldc, rows, n, Eigen::OuterStride<>(ldc));
    if (accumulate)
      cm.noalias() += am * bm;
    else
      cm.noalias() = am * bm;
  }
}

// C[M x N] += A^T * B where A is stored K x M.
void gemm_tn(const float* a, int m, int k, int lda, const float* b, int n, int ldb, float* c, int ldc) {
  const ConstMap bm(b, k, n, Eigen::OuterStride<>(ldb));
  const int blocks = row_blocks(m);
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int r0 = blk * kRowBlock;
    const int rows = std::min(kRowBlock, m - r0);
    const ConstMap at(a + r0, k, rows, Eigen::OuterStride<>(lda));
    MutMap cm(c + static_cast<std::ptrdiff_t>(r0) * ldc, rows, n, Eigen::OuterStride<>(ldc));
    cm.noalias() += at.transpose() * bm;
  }
}

// C[M x N] += A[M x K] * B^T where B is stored N x K.
void gemm_nt(const float* a, int m, int k, int lda, const float* b, int n, int ldb, float* c, int ldc) {
  const ConstMap bt(b, n, k, Eigen::OuterStride<>(ldb));
  const int blocks = row_blocks(m);
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int r0 = blk * kRowBlock;
    const int rows = std::min(kRowBlock, m - r0);
    const ConstMap am(a + static_cast<std::ptrdiff_t>(r0) * lda, rows, k, Eigen::OuterStride<>(lda));
    MutMap cm(c + static_cast<std::ptrdiff_t>(r0) * ldc, rows, n, Eigen::OuterStride<>(ldc));
    cm.noalias() += am * bt.transpose();
  }
}

int tile_columns(std::size_t rows, int total) {
  const std::size_t fit = std::max<std::size_t>(256, kScratchFloats / std::max<std::size_t>(rows, 1));
  return static_cast<int>(std::min<std::size_t>(fit, static_cast<std::size_t>(total)));
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

// Unfolds output pixels [p0, p0 + n) into col[(ci*k + ky)*k + kx][j].
void im2col(const float* x, const ConvGeometry& g, int p0, int n, float* col) {
  const int wo = g.out_w();
  const int k = g.kernel;
  const int s = g.stride;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < g.in_c; ++ci) {
    const float* xc = x + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + static_cast<std::size_t>((ci * k + ky) * k + kx) * n;
        // valid output columns: 0 <= ox * s - pad + kx < in_w
        const int lo = std::min(wo, std::max(0, (g.pad - kx + s - 1) / s));
        const int hi = std::max(lo, std::min(wo, (g.in_w + g.pad - kx + s - 1) / s));
        int j = 0;
        while (j < n) {
          const int p = p0 + j;
          const int oy = p / wo;
          const int ox0 = p % wo;
          const int len = std::min(wo - ox0, n - j);
          float* dst = row + j;
          const int iy = oy * s - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + len, 0.0f);
          } else {
            const float* src = xc + static_cast<std::size_t>(iy) * g.in_w - g.pad + kx;
            const int a = std::clamp(lo, ox0, ox0 + len);
            const int b = std::clamp(hi, a, ox0 + len);
            std::fill(dst, dst + (a - ox0), 0.0f);
            if (s == 1) {
              std::copy(src + a, src + b, dst + (a - ox0));
            } else {
              for (int ox = a; ox < b; ++ox) dst[ox - ox0] = src[ox * s];
            }
            std::fill(dst + (b - ox0), dst + len, 0.0f);
          }
          j += len;
        }
      }
    }
  }
}

// For input pixels [q0, q0 + n) gathers every dy element that the forward pass
// routed from that pixel: dcol[(co*k + ky)*k + kx][j].
void gather_output_grad(const float* dy, const ConvGeometry& g, int q0, int n, float* dcol) {
  const int ho = g.out_h();
  const int wo = g.out_w();
  const int k = g.kernel;
  const int s = g.stride;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < g.out_c; ++co) {
    const float* dyc = dy + static_cast<std::size_t>(co) * ho * wo;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = dcol + static_cast<std::size_t>((co * k + ky) * k + kx) * n;
        int j = 0;
        while (j < n) {
          const int q = q0 + j;
          const int iy = q / g.in_w;
          const int ix0 = q % g.in_w;
          const int len = std::min(g.in_w - ix0, n - j);
          float* dst = row + j;
          const int ty = iy + g.pad - ky;
          if (ty < 0 || ty % s != 0 || ty / s >= ho) {
            std::fill(dst, dst + len, 0.0f);
          } else {
            const float* src = dyc + static_cast<std::size_t>(ty / s) * wo;
            if (s == 1) {
              // ox = ix + pad - kx must lie in [0, wo)
              const int a = std::clamp(kx - g.pad, ix0, ix0 + len);
              const int b = std::clamp(wo + kx - g.pad, a, ix0 + len);
              std::fill(dst, dst + (a - ix0), 0.0f);
              std::copy(src + (a + g.pad - kx), src + (b + g.pad - kx), dst + (a - ix0));
              std::fill(dst + (b - ix0), dst + len, 0.0f);
            } else {
              for (int ix = ix0; ix < ix0 + len; ++ix) {
                const int tx = ix + g.pad - kx;
                dst[ix - ix0] = (tx >= 0 && tx % s == 0 && tx / s < wo) ? src[tx / s] : 0.0f;
              }
            }
          }
          j += len;
        }
      }
    }
  }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

ConvGeometry conv_geometry(const Tensor& x, const Tensor& weight, int stride, int pad) {
  if (x.rank() != 3) throw ShapeError("conv2d input must be C x H x W, got " + x.shape_string());
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3))
    throw ShapeError("conv2d weight must be Cout x Cin x k x k, got " + weight.shape_string());
  if (weight.dim(1) != x.channels())
    throw ShapeError("conv2d channel mismatch: input " + x.shape_string() + " vs weight " +
                     weight.shape_string());
  ConvGeometry g{x.channels(), x.height(), x.width(), weight.dim(0), weight.dim(2), stride, pad};
  if (stride < 1 || pad < 0 || g.out_h() < 1 || g.out_w() < 1)
    throw ShapeError("conv2d produces an empty output for input " + x.shape_string());
  return g;
}

void conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad,
                    Tensor& y) {
  const ConvGeometry g = conv_geometry(x, weight, stride, pad);
  const int hw_out = g.out_h() * g.out_w();
  const int kdim = g.in_c * g.kernel * g.kernel;
  y = Tensor({g.out_c, g.out_h(), g.out_w()});

  if (is_pointwise(g)) {
    gemm_nn(weight.data(), g.out_c, kdim, kdim, x.data(), hw_out, hw_out, y.data(), hw_out, false);
  } else {
    const int tile = tile_columns(static_cast<std::size_t>(kdim), hw_out);
    std::vector<float> col(static_cast<std::size_t>(kdim) * tile);
    for (int p0 = 0; p0 < hw_out; p0 += tile) {
      const int n = std::min(tile, hw_out - p0);
      im2col(x.data(), g, p0, n, col.data());
      gemm_nn(weight.data(), g.out_c, kdim, kdim, col.data(), n, n, y.data() + p0, hw_out, false);
    }
  }

  if (bias != nullptr) {
    if (bias->size() != static_cast<std::size_t>(g.out_c)) throw ShapeError("conv2d bias size mismatch");
#pragma omp parallel for schedule(static)
    for (int co = 0; co < g.out_c; ++co) {
      float* yc = y.channel(co);
      const float b = (*bias)[static_cast<std::size_t>(co)];
      for (int i = 0; i < hw_out; ++i) yc[i] += b;
    }
  }
}

void conv2d_backward_data(const Tensor& dy, const Tensor& weight, int stride, int pad, Tensor& dx) {
  const ConvGeometry g = conv_geometry(dx, weight, stride, pad);
  if (dy.rank() != 3 || dy.channels() != g.out_c || dy.height() != g.out_h() || dy.width() != g.out_w())
    throw ShapeError("conv2d backward: output gradient shape " + dy.shape_string() + " is inconsistent");
  const int hw_in = g.in_h * g.in_w;
  const int hw_out = g.out_h() * g.out_w();

  if (is_pointwise(g)) {
    gemm_tn(weight.data(), g.in_c, g.out_c, g.in_c, dy.data(), hw_out, hw_out, dx.data(), hw_in);
    return;
  }

  const int k2 = g.kernel * g.kernel;
  const int rows = g.out_c * k2;
  // wt[ci][(co*k + ky)*k + kx] = w[co][ci][ky][kx]
  std::vector<float> wt(static_cast<std::size_t>(g.in_c) * rows);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < g.in_c; ++ci) {
    for (int co = 0; co < g.out_c; ++co) {
      const float* src = weight.data() + (static_cast<std::size_t>(co) * g.in_c + ci) * k2;
      float* dst = wt.data() + static_cast<std::size_t>(ci) * rows + static_cast<std::size_t>(co) * k2;
      std::copy(src, src + k2, dst);
    }
  }

  const int tile = tile_columns(static_cast<std::size_t>(rows), hw_in);
  std::vector<float> dcol(static_cast<std::size_t>(rows) * tile);
  for (int q0 = 0; q0 < hw_in; q0 += tile) {
    const int n = std::min(tile, hw_in - q0);
    gather_output_grad(dy.data(), g, q0, n, dcol.data());
    gemm_nn(wt.data(), g.in_c, rows, rows, dcol.data(), n, n, dx.data() + q0, hw_in, true);
  }
}

void conv2d_backward_weight(const Tensor& x, const Tensor& dy, int stride, int pad, Tensor& dweight,
                            Tensor* dbias) {
  const ConvGeometry g = conv_geometry(x, dweight, stride, pad);
  const int hw_out = g.out_h() * g.out_w();
  const int kdim = g.in_c * g.kernel * g.kernel;

  if (is_pointwise(g)) {
    gemm_nt(dy.data(), g.out_c, hw_out, hw_out, x.data(), kdim, hw_out, dweight.data(), kdim);
  } else {
    const int tile = tile_columns(static_cast<std::size_t>(kdim), hw_out);
    std::vector<float> col(static_cast<std::size_t>(kdim) * tile);
    for (int p0 = 0; p0 < hw_out; p0 += tile) {
      const int n = std::min(tile, hw_out - p0);
      im2col(x.data(), g, p0, n, col.data());
      gemm_nt(dy.data() + p0, g.out_c, n, hw_out, col.data(), kdim, n, dweight.data(), kdim);
    }
  }

  if (dbias != nullptr) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < g.out_c; ++co) {
      const float* d = dy.channel(co);
      double acc = 0.0;
      for (int i = 0; i < hw_out; ++i) acc += d[i];
      (*dbias)[static_cast<std::size_t>(co)] += static_cast<float>(acc);
    }
  }
}

namespace {

struct LerpIndex {
  int lo, hi;
  float w_hi;
};

std::vector<LerpIndex> upsample_indices(int in, int out) {
  std::vector<LerpIndex> idx(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    float src = 0.5f * (static_cast<float>(o) + 0.5f) - 0.5f;
    if (src < 0.0f) src = 0.0f;
    const int lo = static_cast<int>(src);
    const int hi = lo < in - 1 ? lo + 1 : lo;
    idx[static_cast<std::size_t>(o)] = {lo, hi, src - static_cast<float>(lo)};
  }
  return idx;
}

}  // namespace

void upsample2x_forward(const Tensor& x, Tensor& y) {
  if (x.rank() != 3) throw ShapeError("upsample expects C x H x W, got " + x.shape_string());
  const int c = x.channels(), h = x.height(), w = x.width();
  y = Tensor({c, 2 * h, 2 * w});
  const auto ry = upsample_indices(h, 2 * h);
  const auto rx = upsample_indices(w, 2 * w);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const float* src = x.channel(ch);
    float* dst = y.channel(ch);
    for (int oy = 0; oy < 2 * h; ++oy) {
      const LerpIndex& iy = ry[static_cast<std::size_t>(oy)];
      const float* r0 = src + static_cast<std::size_t>(iy.lo) * w;
      const float* r1 = src + static_cast<std::size_t>(iy.hi) * w;
      float* out = dst + static_cast<std::size_t>(oy) * 2 * w;
      for (int ox = 0; ox < 2 * w; ++ox) {
        const LerpIndex& ix = rx[static_cast<std::size_t>(ox)];
        const float top = r0[ix.lo] + ix.w_hi * (r0[ix.hi] - r0[ix.lo]);
        const float bot = r1[ix.lo] + ix.w_hi * (r1[ix.hi] - r1[ix.lo]);
        out[ox] = top + iy.w_hi * (bot - top);
      }
    }
  }
}

void upsample2x_backward(const Tensor& dy, Tensor& dx) {
  const int c = dx.channels(), h = dx.height(), w = dx.width();
  if (dy.rank() != 3 || dy.channels() != c || dy.height() != 2 * h || dy.width() != 2 * w)
    throw ShapeError("upsample backward shape mismatch: " + dy.shape_string() + " vs " + dx.shape_string());
  const auto ry = upsample_indices(h, 2 * h);
  const auto rx = upsample_indices(w, 2 * w);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const float* g = dy.channel(ch);
    float* out = dx.channel(ch);
    for (int oy = 0; oy < 2 * h; ++oy) {
      const LerpIndex& iy = ry[static_cast<std::size_t>(oy)];
      float* r0 = out + static_cast<std::size_t>(iy.lo) * w;
      float* r1 = out + static_cast<std::size_t>(iy.hi) * w;
      const float* grow = g + static_cast<std::size_t>(oy) * 2 * w;
      for (int ox = 0; ox < 2 * w; ++ox) {
        const LerpIndex& ix = rx[static_cast<std::size_t>(ox)];
        const float top = grow[ox] * (1.0f - iy.w_hi);
        const float bot = grow[ox] * iy.w_hi;
        r0[ix.lo] += top * (1.0f - ix.w_hi);
        r0[ix.hi] += top * ix.w_hi;
        r1[ix.lo] += bot * (1.0f - ix.w_hi);
        r1[ix.hi] += bot * ix.w_hi;
      }
    }
  }
}

void sample_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps, Tensor& y,
                         NormCache& cache) {
  const int c = x.channels();
  const std::size_t n = x.plane();
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c))
    throw ShapeError("normalization affine size mismatch for input " + x.shape_string());
  y = Tensor(x.dims());
  cache.mean.assign(static_cast<std::size_t>(c), 0.0f);
  cache.inv_std.assign(static_cast<std::size_t>(c), 0.0f);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const float* src = x.channel(ch);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += src[i];
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = src[i] - mean;
      sq += d * d;
    }
    const double inv_std = 1.0 / std::sqrt(sq / static_cast<double>(n) + eps);
    cache.mean[static_cast<std::size_t>(ch)] = static_cast<float>(mean);
    cache.inv_std[static_cast<std::size_t>(ch)] = static_cast<float>(inv_std);
    const float scale = gamma[static_cast<std::size_t>(ch)] * static_cast<float>(inv_std);
    const float shift = beta[static_cast<std::size_t>(ch)];
    const float m = static_cast<float>(mean);
    float* dst = y.channel(ch);
    for (std::size_t i = 0; i < n; ++i) dst[i] = (src[i] - m) * scale + shift;
  }
}

void sample_norm_backward(const Tensor& x, const Tensor& dy, const Tensor& gamma, const NormCache& cache,
                          Tensor& dx, Tensor& dgamma, Tensor& dbeta) {
  const int c = x.channels();
  const std::size_t n = x.plane();
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const auto cs = static_cast<std::size_t>(ch);
    const float* src = x.channel(ch);
    const float* g = dy.channel(ch);
    const float mean = cache.mean[cs];
    const float inv_std = cache.inv_std[cs];
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += g[i];
      sum_gx += static_cast<double>(g[i]) * (src[i] - mean) * inv_std;
    }
    dgamma[cs] += static_cast<float>(sum_gx);
    dbeta[cs] += static_cast<float>(sum_g);
    const double nn = static_cast<double>(n);
    const float k = gamma[cs] * inv_std;
    const float mg = static_cast<float>(sum_g / nn);
    const float mgx = static_cast<float>(sum_gx / nn);
    float* out = dx.channel(ch);
    for (std::size_t i = 0; i < n; ++i) {
      const float xhat = (src[i] - mean) * inv_std;
      out[i] += k * (g[i] - mg - xhat * mgx);
    }
  }
}

void frozen_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& mean,
                         const Tensor& var, float eps, Tensor& y) {
  const int c = x.channels();
  const std::size_t n = x.plane();
  if (gamma.size() != static_cast<std::size_t>(c) || mean.size() != static_cast<std::size_t>(c))
    throw ShapeError("normalization size mismatch for input " + x.shape_string());
  y = Tensor(x.dims());
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const auto cs = static_cast<std::size_t>(ch);
    const float scale = gamma[cs] / std::sqrt(var[cs] + eps);
    const float m = mean[cs];
    const float b = beta[cs];
    const float* src = x.channel(ch);
    float* dst = y.channel(ch);
    for (std::size_t i = 0; i < n; ++i) dst[i] = (src[i] - m) * scale + b;
  }
}

void frozen_norm_backward(const Tensor& x, const Tensor& dy, const Tensor& gamma, const Tensor& mean,
                          const Tensor& var, float eps, Tensor& dx, Tensor& dgamma, Tensor& dbeta) {
  const int c = x.channels();
  const std::size_t n = x.plane();
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const auto cs = static_cast<std::size_t>(ch);
    const float inv_std = 1.0f / std::sqrt(var[cs] + eps);
    const float scale = gamma[cs] * inv_std;
    const float m = mean[cs];
    const float* src = x.channel(ch);
    const float* g = dy.channel(ch);
    float* out = dx.channel(ch);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += g[i] * scale;
      sum_g += g[i];
      sum_gx += static_cast<double>(g[i]) * (src[i] - m) * inv_std;
    }
    dgamma[cs] += static_cast<float>(sum_gx);
    dbeta[cs] += static_cast<float>(sum_g);
  }
}

void relu_forward(const Tensor& x, Tensor& y) {
  y = Tensor(x.dims());
  const std::size_t n = x.size();
  const float* src = x.data();
  float* dst = y.data();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] < 0.0f ? 0.0f : src[i];  // NaN passes through
}

void relu_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
  const std::size_t n = y.size();
  const float* out = y.data();
  const float* g = dy.data();
  float* d = dx.data();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i)
    if (out[i] > 0.0f) d[i] += g[i];
}

void max_pool_forward(const Tensor& x, int kernel, int stride, int pad, Tensor& y,
                      std::vector<std::int32_t>& argmax) {
  const int c = x.channels(), h = x.height(), w = x.width();
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho < 1 || wo < 1) throw ShapeError("max pool produces an empty output for " + x.shape_string());
  y = Tensor({c, ho, wo});
  argmax.assign(y.size(), -1);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const float* src = x.channel(ch);
    float* dst = y.channel(ch);
    std::int32_t* arg = argmax.data() + static_cast<std::size_t>(ch) * ho * wo;
    const std::int32_t base = static_cast<std::int32_t>(static_cast<std::size_t>(ch) * h * w);
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        std::int32_t best_i = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const float v = src[iy * w + ix];
            if (v > best || best_i < 0) {
              best = v;
              best_i = base + iy * w + ix;
            }
          }
        }
        dst[oy * wo + ox] = best_i < 0 ? 0.0f : best;
        arg[oy * wo + ox] = best_i;
      }
    }
  }
}

void max_pool_backward(const Tensor& dy, const std::vector<std::int32_t>& argmax, Tensor& dx) {
  const int c = dy.channels();
  const std::size_t per = dy.plane();
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const std::size_t off = static_cast<std::size_t>(ch) * per;
    for (std::size_t i = 0; i < per; ++i) {
      const std::int32_t src = argmax[off + i];
      if (src >= 0) dx[static_cast<std::size_t>(src)] += dy[off + i];
    }
  }
}

void avg_pool2x2_forward(const Tensor& x, Tensor& y) {
  const int c = x.channels(), h = x.height(), w = x.width();
  const int ho = h / 2, wo = w / 2;
  if (ho < 1 || wo < 1) throw ShapeError("avg pool produces an empty output for " + x.shape_string());
  y = Tensor({c, ho, wo});
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const float* src = x.channel(ch);
    float* dst = y.channel(ch);
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const float* p = src + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
        dst[oy * wo + ox] = 0.25f * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  }
}

void avg_pool2x2_backward(const Tensor& dy, Tensor& dx) {
  const int c = dx.channels(), w = dx.width();
  const int ho = dy.height(), wo = dy.width();
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    const float* g = dy.channel(ch);
    float* out = dx.channel(ch);
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const float v = 0.25f * g[oy * wo + ox];
        float* p = out + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
        p[0] += v;
        p[1] += v;
        p[w] += v;
        p[w + 1] += v;
      }
  }
}

}  // namespace farnet::kernels
