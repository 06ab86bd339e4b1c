/*
 * Copyright 2026 The phonoprobe Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace phonoprobe {

/// Dense tensor of 64-bit floats, row-major, rank 1 or 2. This is the sole
/// container for learned parameters, activations and probe vectors.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor with the given shape. Every dimension must be > 0.
  explicit Tensor(std::vector<std::size_t> shape);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor full(std::size_t rows, std::size_t cols, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);
  static Tensor from_rows(std::size_t rows, std::size_t cols,
                          std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  /// 2-D view: rank-1 tensors behave as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : (data_.empty() ? 0 : 1); }
  std::size_t cols() const {
    return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0);
  }

  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Squared Frobenius norm.
  double squared_norm() const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace phonoprobe
