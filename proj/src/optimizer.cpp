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

#include "farnet/optimizer.hpp"

#include <cmath>

#include "farnet/errors.hpp"

namespace farnet {

void AdadeltaConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("optimizer lr must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("adadelta rho must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adadelta eps must be positive");
}

Adadelta::Adadelta(ParameterStore& store, AdadeltaConfig config) : store_(store), config_(config) {
  config_.validate();
  for (const ParamEntry& e : store_.entries()) {
    square_avg_.emplace_back(e.trainable ? Tensor(e.var->value.dims()) : Tensor());
    acc_delta_.emplace_back(e.trainable ? Tensor(e.var->value.dims()) : Tensor());
  }
}

void Adadelta::step(float grad_scale) {
  const float lr = static_cast<float>(config_.lr);
  const float rho = static_cast<float>(config_.rho);
  const float eps = static_cast<float>(config_.eps);
  const auto& entries = store_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ParamEntry& e = entries[i];
    if (!e.trainable || e.var->grad.empty()) continue;
    Tensor& p = e.var->value;
    const Tensor& g = e.var->grad;
    Tensor& v = square_avg_[i];
    Tensor& u = acc_delta_[i];
    const std::size_t n = p.size();
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < n; ++j) {
      const float gj = g[j] * grad_scale;
      v[j] = rho * v[j] + (1.0f - rho) * gj * gj;
      const float d = std::sqrt(u[j] + eps) / std::sqrt(v[j] + eps) * gj;
      u[j] = rho * u[j] + (1.0f - rho) * d * d;
      p[j] -= lr * d;
    }
  }
  ++steps_;
}

void Adadelta::save(TensorArchive& archive) const {
  const auto& entries = store_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    archive.add("adadelta/sq/" + entries[i].name, square_avg_[i]);
    archive.add("adadelta/acc/" + entries[i].name, acc_delta_[i]);
  }
  archive.meta["adadelta"] = {{"lr", config_.lr}, {"rho", config_.rho}, {"eps", config_.eps}, {"steps", steps_}};
}

void Adadelta::load(const TensorArchive& archive) {
  const auto& entries = store_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    for (auto [prefix, dst] : {std::pair{"adadelta/sq/", &square_avg_[i]}, std::pair{"adadelta/acc/", &acc_delta_[i]}}) {
      const Tensor* t = archive.find(prefix + entries[i].name);
      if (t == nullptr || !t->same_shape(*dst))
        throw ResourceError("checkpoint optimizer state missing or mis-shaped for " + entries[i].name);
      *dst = *t;
    }
  }
  if (archive.meta.contains("adadelta")) steps_ = archive.meta["adadelta"].value("steps", std::size_t{0});
}

}  // namespace farnet
