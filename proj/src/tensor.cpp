// Copyright 2026 The hardshare Authors
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

#include "hardshare/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hardshare/errors.hpp"

namespace hardshare {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ConfigError("non-positive dimension in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::span<const float> data) : Tensor(std::move(shape), FloatBuffer(data.begin(), data.end())) {}

Tensor::Tensor(Shape shape, FloatBuffer data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::reshaped(Shape shape) const {
    Tensor t = *this;
    t.reshape(std::move(shape));
    return t;
}

void Tensor::reshape(Shape shape) {
    if (shape_size(shape) != data_.size()) {
        throw ConfigError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    shape_ = std::move(shape);
}

std::size_t Tensor::row_size() const {
    if (shape_.empty()) return 1;
    return data_.size() / static_cast<std::size_t>(shape_[0]);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || end > static_cast<std::size_t>(shape_[0]) || begin >= end) {
        throw ConfigError("row slice out of range for shape " + shape_str(shape_));
    }
    Shape s = shape_;
    s[0] = static_cast<int>(end - begin);
    const std::size_t rs = row_size();
    return Tensor(std::move(s), FloatBuffer(data_.begin() + static_cast<std::ptrdiff_t>(begin * rs),
                                              data_.begin() + static_cast<std::ptrdiff_t>(end * rs)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const {
    if (shape_.empty() || rows.empty()) throw ConfigError("gather on scalar tensor or empty row set");
    Shape s = shape_;
    s[0] = static_cast<int>(rows.size());
    Tensor out(std::move(s));
    const std::size_t rs = row_size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(shape_[0])) throw ConfigError("gather row out of range");
        std::memcpy(out.data() + i * rs, data() + rows[i] * rs, rs * sizeof(float));
    }
    return out;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace hardshare
