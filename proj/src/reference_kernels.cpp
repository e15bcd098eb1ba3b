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

#include "farnet/reference_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace farnet::reference {

namespace {

int out_extent(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// Source coordinate of output index `o` for x2 half-pixel upsampling.
void lerp_source(int o, int in, int& lo, int& hi, double& t) {
  double src = (o + 0.5) / 2.0 - 0.5;
  if (src < 0.0) src = 0.0;
  lo = static_cast<int>(std::floor(src));
  hi = std::min(lo + 1, in - 1);
  t = src - lo;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad) {
  const int cin = x.channels(), h = x.height(), w = x.width();
  const int cout = weight.dim(0), k = weight.dim(2);
  const int ho = out_extent(h, k, stride, pad), wo = out_extent(w, k, stride, pad);
  Tensor y({cout, ho, wo});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0;
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += static_cast<double>(
                         weight[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx]) *
                     x.at(ci, iy, ix);
            }
        y.at(co, oy, ox) = static_cast<float>(acc);
      }
  return y;
}

Tensor conv2d_backward_data(const Tensor& dy, const Tensor& weight, int in_h, int in_w, int stride, int pad) {
  const int cout = weight.dim(0), cin = weight.dim(1), k = weight.dim(2);
  std::vector<double> acc(static_cast<std::size_t>(cin) * in_h * in_w, 0.0);
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < dy.height(); ++oy)
      for (int ox = 0; ox < dy.width(); ++ox) {
        const double g = dy.at(co, oy, ox);
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
              acc[(static_cast<std::size_t>(ci) * in_h + iy) * in_w + ix] +=
                  g * weight[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx];
            }
      }
  Tensor dx({cin, in_h, in_w});
  for (std::size_t i = 0; i < acc.size(); ++i) dx[i] = static_cast<float>(acc[i]);
  return dx;
}

Tensor conv2d_backward_weight(const Tensor& x, const Tensor& dy, int kernel, int stride, int pad) {
  const int cin = x.channels(), h = x.height(), w = x.width();
  const int cout = dy.channels();
  Tensor dw({cout, cin, kernel, kernel});
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          double acc = 0.0;
          for (int oy = 0; oy < dy.height(); ++oy)
            for (int ox = 0; ox < dy.width(); ++ox) {
              const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += static_cast<double>(dy.at(co, oy, ox)) * x.at(ci, iy, ix);
            }
          dw[((static_cast<std::size_t>(co) * cin + ci) * kernel + ky) * kernel + kx] = static_cast<float>(acc);
        }
  return dw;
}

Tensor upsample2x_forward(const Tensor& x) {
  const int c = x.channels(), h = x.height(), w = x.width();
  Tensor y({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < 2 * h; ++oy)
      for (int ox = 0; ox < 2 * w; ++ox) {
        int y0, y1, x0, x1;
        double ty, tx;
        lerp_source(oy, h, y0, y1, ty);
        lerp_source(ox, w, x0, x1, tx);
        const double v = (1 - ty) * ((1 - tx) * x.at(ch, y0, x0) + tx * x.at(ch, y0, x1)) +
                         ty * ((1 - tx) * x.at(ch, y1, x0) + tx * x.at(ch, y1, x1));
        y.at(ch, oy, ox) = static_cast<float>(v);
      }
  return y;
}

Tensor upsample2x_backward(const Tensor& dy) {
  const int c = dy.channels(), h = dy.height() / 2, w = dy.width() / 2;
  std::vector<double> acc(static_cast<std::size_t>(c) * h * w, 0.0);
  auto at = [&](int ch, int yy, int xx) -> double& { return acc[(static_cast<std::size_t>(ch) * h + yy) * w + xx]; };
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < 2 * h; ++oy)
      for (int ox = 0; ox < 2 * w; ++ox) {
        int y0, y1, x0, x1;
        double ty, tx;
        lerp_source(oy, h, y0, y1, ty);
        lerp_source(ox, w, x0, x1, tx);
        const double g = dy.at(ch, oy, ox);
        at(ch, y0, x0) += g * (1 - ty) * (1 - tx);
        at(ch, y0, x1) += g * (1 - ty) * tx;
        at(ch, y1, x0) += g * ty * (1 - tx);
        at(ch, y1, x1) += g * ty * tx;
      }
  Tensor dx({c, h, w});
  for (std::size_t i = 0; i < acc.size(); ++i) dx[i] = static_cast<float>(acc[i]);
  return dx;
}

Tensor sample_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  Tensor y(x.dims());
  const std::size_t n = x.plane();
  for (int ch = 0; ch < x.channels(); ++ch) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x.channel(ch)[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x.channel(ch)[i] - mean) * (x.channel(ch)[i] - mean);
    var /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      y.channel(ch)[i] = static_cast<float>(gamma[static_cast<std::size_t>(ch)] * (x.channel(ch)[i] - mean) /
                                                std::sqrt(var + eps) +
                                            beta[static_cast<std::size_t>(ch)]);
  }
  return y;
}

Tensor sample_norm_backward(const Tensor& x, const Tensor& dy, const Tensor& gamma, float eps, Tensor& dgamma,
                            Tensor& dbeta) {
  // Explicit Jacobian-vector product: dx_j = sum_i dy_i * d y_i / d x_j.
  Tensor dx(x.dims());
  dgamma = Tensor({x.channels()});
  dbeta = Tensor({x.channels()});
  const std::size_t n = x.plane();
  const double nn = static_cast<double>(n);
  for (int ch = 0; ch < x.channels(); ++ch) {
    const float* xs = x.channel(ch);
    const float* g = dy.channel(ch);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xs[i];
    mean /= nn;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xs[i] - mean) * (xs[i] - mean);
    var /= nn;
    const double s = std::sqrt(var + eps);
    double dg = 0.0, db = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dg += g[i] * (xs[i] - mean) / s;
      db += g[i];
    }
    dgamma[static_cast<std::size_t>(ch)] = static_cast<float>(dg);
    dbeta[static_cast<std::size_t>(ch)] = static_cast<float>(db);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double xi = (xs[i] - mean) / s;
        const double xj = (xs[j] - mean) / s;
        const double jac = ((i == j ? 1.0 : 0.0) - 1.0 / nn - xi * xj / nn) / s;
        acc += g[i] * jac;
      }
      dx.channel(ch)[j] = static_cast<float>(gamma[static_cast<std::size_t>(ch)] * acc);
    }
  }
  return dx;
}

Tensor max_pool_forward(const Tensor& x, int kernel, int stride, int pad) {
  const int ho = out_extent(x.height(), kernel, stride, pad), wo = out_extent(x.width(), kernel, stride, pad);
  Tensor y({x.channels(), ho, wo});
  for (int ch = 0; ch < x.channels(); ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) {
            const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < x.height() && ix >= 0 && ix < x.width()) best = std::max(best, x.at(ch, iy, ix));
          }
        y.at(ch, oy, ox) = best;
      }
  return y;
}

Tensor avg_pool2x2_forward(const Tensor& x) {
  Tensor y({x.channels(), x.height() / 2, x.width() / 2});
  for (int ch = 0; ch < x.channels(); ++ch)
    for (int oy = 0; oy < y.height(); ++oy)
      for (int ox = 0; ox < y.width(); ++ox) {
        double s = 0.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) s += x.at(ch, 2 * oy + dy, 2 * ox + dx);
        y.at(ch, oy, ox) = static_cast<float>(s / 4.0);
      }
  return y;
}

}  // namespace farnet::reference
