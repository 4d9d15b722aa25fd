#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dscore/errors.hpp"

namespace dscore {

using Extents = std::vector<std::size_t>;

inline std::size_t element_count(const Extents& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Extents& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Batch-free image shape: channels x height x width.
struct Shape3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const { return channels * height * width; }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct Shape4 {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense row-major N-dimensional array. Image-like data uses (batch, channel, height, width).
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Extents shape, T fill = T{})
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    BasicTensor(Extents shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (element_count(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }

    const Extents& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    Shape4 shape4() const {
        if (rank() != 4) throw ShapeError("expected a rank-4 tensor, got " + shape_string(shape_));
        return {shape_[0], shape_[1], shape_[2], shape_[3]};
    }

    std::size_t offset(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return ((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
    }
    T& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) { return data_[offset(b, c, y, x)]; }
    const T& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[offset(b, c, y, x)];
    }

    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    BasicTensor reshaped(Extents shape) const& {
        BasicTensor out = *this;
        return std::move(out).reshaped(std::move(shape));
    }
    BasicTensor reshaped(Extents shape) && {
        if (element_count(shape) != data_.size())
            throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        shape_ = std::move(shape);
        return std::move(*this);
    }

    /// Copies items [first, first+count) along the leading axis.
    BasicTensor slice(std::size_t first, std::size_t count) const {
        if (rank() == 0 || first + count > shape_[0])
            throw ShapeError("slice out of range for shape " + shape_string(shape_));
        const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
        Extents s = shape_;
        s[0] = count;
        return BasicTensor(std::move(s), std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(first * stride),
                                                        data_.begin() + static_cast<std::ptrdiff_t>((first + count) * stride)));
    }

    template <typename U>
    BasicTensor<U> cast() const {
        return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    Extents shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* where) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + where);
}

}  // namespace dscore
