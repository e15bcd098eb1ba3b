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

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace farnet {

/// Dense row-major float tensor. Feature maps are rank 3 (C x H x W),
/// convolution weights rank 4 (Cout x Cin x kh x kw), biases rank 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, float fill = 0.0f);
  Tensor(std::initializer_list<int> dims, float fill = 0.0f)
      : Tensor(std::vector<int>(dims), fill) {}

  static Tensor chw(int c, int h, int w, float fill = 0.0f) { return Tensor({c, h, w}, fill); }

  const std::vector<int>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-3 accessors.
  int channels() const { return dims_.at(0); }
  int height() const { return dims_.at(1); }
  int width() const { return dims_.at(2); }
  std::size_t plane() const { return static_cast<std::size_t>(height()) * width(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height() + y) * width() + x]; }
  float at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height() + y) * width() + x];
  }

  float* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * plane(); }
  const float* channel(int c) const { return data_.data() + static_cast<std::size_t>(c) * plane(); }

  void fill(float v);
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  std::string shape_string() const;

 private:
  std::vector<int> dims_;
  std::vector<float> data_;
};

std::string shape_string(const std::vector<int>& dims);

}  // namespace farnet
