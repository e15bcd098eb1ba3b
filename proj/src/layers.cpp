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

#include "farnet/layers.hpp"

#include <cmath>

#include "farnet/errors.hpp"

namespace farnet {

ag::Var ParameterStore::add(const std::string& name, Tensor init, bool trainable) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name " + name);
  ag::Var v = trainable ? ag::parameter(std::move(init)) : ag::constant(std::move(init));
  entries_.push_back({name, v, trainable});
  return v;
}

const ParamEntry* ParameterStore::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.var->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.var->grad = Tensor();
}

ag::Var Norm::operator()(const ag::Var& x) const {
  if (kind == NormKind::sample) return ag::sample_norm(x, gamma, beta);
  return ag::frozen_norm(x, gamma, beta, running_mean->value, running_var->value);
}

Conv make_conv(ParameterStore& store, const std::string& name, int in_c, int out_c, int kernel, int stride, int pad,
               bool bias, Init init, Rng& rng) {
  Tensor w({out_c, in_c, kernel, kernel});
  const double fan_in = static_cast<double>(in_c) * kernel * kernel;
  const float stddev = init == Init::he ? static_cast<float>(std::sqrt(2.0 / fan_in)) : 1e-3f;
  std::normal_distribution<float> dist(0.0f, stddev);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
  Conv c;
  c.weight = store.add(name + ".weight", std::move(w));
  if (bias) c.bias = store.add(name + ".bias", Tensor({out_c}));
  c.stride = stride;
  c.pad = pad;
  return c;
}

Norm make_norm(ParameterStore& store, const std::string& name, int channels, NormKind kind) {
  Norm n;
  n.kind = kind;
  n.gamma = store.add(name + ".weight", Tensor({channels}, 1.0f));
  n.beta = store.add(name + ".bias", Tensor({channels}));
  if (kind == NormKind::frozen) {
    n.running_mean = store.add(name + ".running_mean", Tensor({channels}), false);
    n.running_var = store.add(name + ".running_var", Tensor({channels}, 1.0f), false);
  }
  return n;
}

ConvUnit make_unit(ParameterStore& store, const std::string& name, int in_c, int out_c, int kernel, int stride,
                   Rng& rng, NormKind norm) {
  ConvUnit u;
  u.conv = make_conv(store, name + ".conv", in_c, out_c, kernel, stride, kernel / 2, false, Init::he, rng);
  u.norm = make_norm(store, name + ".norm", out_c, norm);
  return u;
}

}  // namespace farnet
