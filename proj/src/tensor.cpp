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

#include "phonoprobe/tensor.hpp"

#include <cmath>
#include <sstream>

#include "phonoprobe/common.hpp"

namespace phonoprobe {

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) {
    if (d == 0) throw ConfigError("Tensor: zero dimension");
    n *= d;
  }
  if (shape_.empty()) n = 0;
  data_.assign(n, 0.0);
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return Tensor({rows, cols});
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
  Tensor t({rows, cols});
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t({1, 1});
  t.at(0) = value;
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  Tensor t;
  t.shape_ = {1, values.size()};
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::from_rows(std::size_t rows, std::size_t cols,
                         std::vector<double> values) {
  if (values.size() != rows * cols)
    throw ConfigError("Tensor::from_rows: size mismatch");
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_ = std::move(values);
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

double Tensor::squared_norm() const {
  double s = 0;
  for (double x : data_) s += x * x;
  return s;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i)
    os << (i ? "x" : "") << shape_[i];
  os << ")";
  return os.str();
}

}  // namespace phonoprobe
