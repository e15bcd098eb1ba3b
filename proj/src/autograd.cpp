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

#include "farnet/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <unordered_set>

#include "farnet/errors.hpp"
#include "farnet/kernels.hpp"

namespace farnet::ag {

namespace {

std::atomic<std::uint64_t> g_seq{0};
thread_local bool t_grad_enabled = true;

Var make_node(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

// Wires `out` into the graph if any parent needs a gradient.
bool attach(const Var& out, std::vector<Var> parents, std::function<void(Node&)> fn) {
  if (!t_grad_enabled) return false;
  const bool needed = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p && p->requires_grad; });
  if (!needed) return false;
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
  return true;
}

bool wants(const Var& v) { return v && v->requires_grad; }

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.dims());
  return grad;
}

Var constant(Tensor value) { return make_node(std::move(value)); }

Var parameter(Tensor value) {
  Var v = make_node(std::move(value));
  v->requires_grad = true;
  return v;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Var& root, const Tensor& seed) { backward({{root, seed}}); }

void backward(const std::vector<std::pair<Var, Tensor>>& roots) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack;
  for (const auto& [root, seed] : roots) {
    if (!root || !root->requires_grad) continue;
    if (!seed.same_shape(root->value))
      throw ShapeError("backward seed " + seed.shape_string() + " does not match root " + root->value.shape_string());
    stack.push_back(root.get());
  }
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const Var& p : n->parents)
      if (p && p->requires_grad) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

  for (const auto& [root, seed] : roots) {
    if (!root || !root->requires_grad) continue;
    Tensor& g = root->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  }

  for (Node* n : order) {
    if (!n->backward_fn || n->grad.empty()) continue;
    n->backward_fn(*n);
    // Interior gradients are not needed once propagated.
    n->grad = Tensor();
  }
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  Tensor y;
  kernels::conv2d_forward(x->value, weight->value, bias ? &bias->value : nullptr, stride, pad, y);
  Var out = make_node(std::move(y));
  attach(out, {x, weight, bias}, [x, weight, bias, stride, pad](Node& self) {
    if (wants(x)) kernels::conv2d_backward_data(self.grad, weight->value, stride, pad, x->grad_buffer());
    if (wants(weight) || wants(bias)) {
      Tensor scratch_w;
      Tensor scratch_b;
      Tensor* dw = &weight->grad_buffer();
      if (!wants(weight)) {
        scratch_w = Tensor(weight->value.dims());
        dw = &scratch_w;
      }
      Tensor* db = wants(bias) ? &bias->grad_buffer() : nullptr;
      kernels::conv2d_backward_weight(x->value, self.grad, stride, pad, *dw, db);
    }
  });
  return out;
}

Var sample_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
  Tensor y;
  auto cache = std::make_shared<kernels::NormCache>();
  kernels::sample_norm_forward(x->value, gamma->value, beta->value, eps, y, *cache);
  Var out = make_node(std::move(y));
  attach(out, {x, gamma, beta}, [x, gamma, beta, cache](Node& self) {
    Tensor dx_scratch;
    Tensor& dx = wants(x) ? x->grad_buffer() : (dx_scratch = Tensor(x->value.dims()));
    Tensor dg_scratch, db_scratch;
    Tensor& dg = wants(gamma) ? gamma->grad_buffer() : (dg_scratch = Tensor(gamma->value.dims()));
    Tensor& db = wants(beta) ? beta->grad_buffer() : (db_scratch = Tensor(beta->value.dims()));
    kernels::sample_norm_backward(x->value, self.grad, gamma->value, *cache, dx, dg, db);
  });
  return out;
}

Var frozen_norm(const Var& x, const Var& gamma, const Var& beta, const Tensor& mean, const Tensor& var,
                float eps) {
  Tensor y;
  kernels::frozen_norm_forward(x->value, gamma->value, beta->value, mean, var, eps, y);
  Var out = make_node(std::move(y));
  attach(out, {x, gamma, beta}, [x, gamma, beta, mean, var, eps](Node& self) {
    Tensor dx_scratch;
    Tensor& dx = wants(x) ? x->grad_buffer() : (dx_scratch = Tensor(x->value.dims()));
    Tensor dg_scratch, db_scratch;
    Tensor& dg = wants(gamma) ? gamma->grad_buffer() : (dg_scratch = Tensor(gamma->value.dims()));
    Tensor& db = wants(beta) ? beta->grad_buffer() : (db_scratch = Tensor(beta->value.dims()));
    kernels::frozen_norm_backward(x->value, self.grad, gamma->value, mean, var, eps, dx, dg, db);
  });
  return out;
}

Var relu(const Var& x) {
  Tensor y;
  kernels::relu_forward(x->value, y);
  Var out = make_node(std::move(y));
  attach(out, {x}, [x](Node& self) { kernels::relu_backward(self.value, self.grad, x->grad_buffer()); });
  return out;
}

Var upsample2x(const Var& x) {
  Tensor y;
  kernels::upsample2x_forward(x->value, y);
  Var out = make_node(std::move(y));
  attach(out, {x}, [x](Node& self) { kernels::upsample2x_backward(self.grad, x->grad_buffer()); });
  return out;
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int h = parts.front()->value.height();
  const int w = parts.front()->value.width();
  int channels = 0;
  for (const Var& p : parts) {
    if (p->value.rank() != 3 || p->value.height() != h || p->value.width() != w)
      throw ShapeError("concat spatial mismatch: " + parts.front()->value.shape_string() + " vs " +
                       p->value.shape_string());
    channels += p->value.channels();
  }
  Tensor y({channels, h, w});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::memcpy(y.data() + offset, p->value.data(), p->value.size() * sizeof(float));
    offset += p->value.size();
  }
  Var out = make_node(std::move(y));
  attach(out, parts, [parts](Node& self) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t n = p->value.size();
      if (wants(p)) {
        Tensor& g = p->grad_buffer();
        const float* src = self.grad.data() + off;
        for (std::size_t i = 0; i < n; ++i) g[i] += src[i];
      }
      off += n;
    }
  });
  return out;
}

Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("add shape mismatch: " + a->value.shape_string() + " vs " + b->value.shape_string());
  Tensor y(a->value.dims());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] + b->value[i];
  Var out = make_node(std::move(y));
  attach(out, {a, b}, [a, b](Node& self) {
    for (const Var* p : {&a, &b}) {
      if (!wants(*p)) continue;
      Tensor& g = (*p)->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
  return out;
}

Var max_pool(const Var& x, int kernel, int stride, int pad) {
  Tensor y;
  auto argmax = std::make_shared<std::vector<std::int32_t>>();
  kernels::max_pool_forward(x->value, kernel, stride, pad, y, *argmax);
  Var out = make_node(std::move(y));
  attach(out, {x}, [x, argmax](Node& self) { kernels::max_pool_backward(self.grad, *argmax, x->grad_buffer()); });
  return out;
}

Var avg_pool2x2(const Var& x) {
  Tensor y;
  kernels::avg_pool2x2_forward(x->value, y);
  Var out = make_node(std::move(y));
  attach(out, {x}, [x](Node& self) { kernels::avg_pool2x2_backward(self.grad, x->grad_buffer()); });
  return out;
}

}  // namespace farnet::ag
