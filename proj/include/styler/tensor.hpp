// styler/tensor.hpp

// Copyright 2026 The styler Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef STYLER_TENSOR_HPP_
#define STYLER_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "styler/errors.hpp"

namespace styler {

// Dense row-major float32 tensor with a dynamic shape. Nearly all math in
// the library is rank-1 or rank-2; rank-3 appears only for conv weights.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::initializer_list<int64_t> shape)
      : Tensor(std::vector<int64_t>(shape)) {}

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, float value);
  static Tensor from(std::vector<int64_t> shape, std::vector<float> values);

  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int64_t>& shape() const { return shape_; }

  // 2-D helpers. rows() is dim 0; cols() flattens any trailing dims, so a
  // rank-3 weight can be consumed as a matrix when convenient.
  int64_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  int64_t cols() const { return rows() == 0 ? 0 : numel() / rows(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  float& operator()(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }
  float operator()(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(float value);

  std::string shape_string() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

}  // namespace styler

#endif  // STYLER_TENSOR_HPP_
