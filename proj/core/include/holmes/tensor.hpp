#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace holmes {

/// Dense row-major array of doubles. Product of `shape()` always equals `size()`.
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    /// Throws DimensionError when the data length does not match the shape.
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    /// Rank-1 tensor holding `values`.
    static Tensor vector(std::vector<double> values);
    static Tensor vector(std::initializer_list<double> values);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Element (r, c) of a rank-2 tensor.
    double& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

    void fill(double v);
    bool all_finite() const noexcept;

    /// Moves the buffer out, leaving the tensor empty.
    std::vector<double> release() && { shape_.clear(); return std::move(data_); }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_volume(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace holmes
