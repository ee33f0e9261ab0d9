#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ovi {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
class RealArray {
public:
    RealArray() = default;
    explicit RealArray(Shape shape);
    RealArray(Shape shape, std::vector<double> data);

    static RealArray vector(std::vector<double> data);
    static RealArray matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static RealArray scalar(double v);
    static RealArray zeros(Shape shape) { return RealArray(std::move(shape)); }
    static RealArray identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_.at(1) + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_.at(1) + c]; }

    std::span<double> span() noexcept { return data_; }
    std::span<const double> span() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const noexcept;
    void fill(double v);

    friend bool operator==(const RealArray& a, const RealArray& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

} // namespace ovi
