// Copyright 2026 The o3w Authors.
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
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace o3w {

/// Dense row-major array of 64-bit reals.
///
/// Rank 0 is a scalar (empty shape, one element). Rank-2 tensors are the
/// common case: rows are samples (BEV cells, text entries) and columns are
/// feature channels.
class Tensor {
public:
    using Shape = std::vector<std::size_t>;

    Tensor() : Tensor(Shape{0}) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(1); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    std::span<const double> row(std::size_t r) const;
    std::span<double> row(std::size_t r);

    /// Scalar value; requires exactly one element.
    double item() const;

    bool all_finite() const;

    /// Same shape with every entry rounded through 32-bit float storage.
    Tensor rounded_to_float() const;

    Tensor reshaped(Shape shape) const;

    /// Exact comparison of shape and values.
    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_size(const Tensor::Shape& shape);
std::string shape_string(const Tensor::Shape& shape);

/// Largest absolute entrywise difference. Shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Returns a·b (or with either operand transposed) through an optimized kernel.
Tensor gemm(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b);

}  // namespace o3w
