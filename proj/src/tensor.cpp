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

#include "o3w/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "o3w/error.hpp"

namespace o3w {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

}  // namespace

std::size_t shape_size(const Tensor::Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Tensor::Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_size(shape_) != data_.size()) {
        throw DimensionError("tensor shape " + shape_string(shape_) + " does not hold " +
                             std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values)
{
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows)
{
    const std::size_t n = rows.size();
    const std::size_t m = n ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(n * m);
    for (const auto& r : rows) {
        if (r.size() != m) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor(Shape{n, m}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const
{
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[axis];
}

std::span<const double> Tensor::row(std::size_t r) const
{
    const std::size_t c = shape_.size() == 2 ? shape_[1] : 1;
    return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r)
{
    const std::size_t c = shape_.size() == 2 ? shape_[1] : 1;
    return std::span<double>(data_).subspan(r * c, c);
}

double Tensor::item() const
{
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::rounded_to_float() const
{
    Tensor out(shape_);
    std::transform(data_.begin(), data_.end(), out.data_.begin(),
                   [](double v) { return static_cast<double>(static_cast<float>(v)); });
    return out;
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) {
        throw DimensionError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

Tensor gemm(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b)
{
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("gemm expects rank-2 operands");
    const std::size_t n = transpose_a ? a.cols() : a.rows();
    const std::size_t k = transpose_a ? a.rows() : a.cols();
    const std::size_t kb = transpose_b ? b.cols() : b.rows();
    const std::size_t p = transpose_b ? b.rows() : b.cols();
    if (k != kb) {
        throw DimensionError("gemm inner dimensions differ: " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    Tensor out({n, p});
    if (n == 0 || p == 0) return out;
    if (k == 0) return out;
    ConstMap ma(a.data().data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    ConstMap mb(b.data().data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
    MutMap mc(out.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    if (!transpose_a && !transpose_b) {
        mc.noalias() = ma * mb;
    } else if (transpose_a && !transpose_b) {
        mc.noalias() = ma.transpose() * mb;
    } else if (!transpose_a && transpose_b) {
        mc.noalias() = ma * mb.transpose();
    } else {
        mc.noalias() = ma.transpose() * mb.transpose();
    }
    return out;
}

}  // namespace o3w
