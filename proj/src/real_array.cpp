#include "ovi/real_array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "ovi/errors.hpp"

namespace ovi {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

RealArray::RealArray(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

RealArray::RealArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
        throw DimensionError("RealArray: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }
}

RealArray RealArray::vector(std::vector<double> data) {
    const std::size_t n = data.size();
    return RealArray({n}, std::move(data));
}

RealArray RealArray::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return RealArray({rows, cols}, std::move(data));
}

RealArray RealArray::scalar(double v) { return RealArray({1}, {v}); }

RealArray RealArray::identity(std::size_t n) {
    RealArray out({n, n});
    for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
    return out;
}

bool RealArray::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void RealArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

} // namespace ovi
