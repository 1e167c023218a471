#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbrnn::nn {

/// Storage for anything Eigen maps. Vectorized reductions peel leading
/// elements up to the first aligned address, so on plain heap memory the
/// summation order (and the last bits of the result) depends on where the
/// allocator happened to place the buffer.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

/// Dense row-major container of 64-bit reals. Rank 1 tensors are treated as
/// a single row by the matrix-shaped operations.
struct Tensor {
    std::vector<std::size_t> shape;
    Buffer values;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : shape(std::move(dims)), values(element_count(shape), fill) {}

    Tensor(std::vector<std::size_t> dims, Buffer data)
        : shape(std::move(dims)), values(std::move(data))
    {
        if (values.size() != element_count(shape))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    Tensor(std::vector<std::size_t> dims, std::span<const double> data)
        : shape(std::move(dims)), values(data.begin(), data.end())
    {
        if (values.size() != element_count(shape))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
    {
        return Tensor({rows, cols}, fill);
    }

    static Tensor vector(std::size_t len, double fill = 0.0) { return Tensor({len}, fill); }

    static std::size_t element_count(std::span<const std::size_t> dims)
    {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
    }

    [[nodiscard]] std::size_t size() const { return values.size(); }
    [[nodiscard]] std::size_t rank() const { return shape.size(); }
    [[nodiscard]] std::size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
    [[nodiscard]] std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    [[nodiscard]] std::span<double> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const
    {
        return {values.data() + r * cols(), cols()};
    }

    [[nodiscard]] bool all_finite() const
    {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    [[nodiscard]] bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline std::string shape_string(const std::vector<std::size_t>& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// A trainable tensor with its gradient slot.
struct Parameter {
    std::string name;
    Tensor value;
    Buffer grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

} // namespace sbrnn::nn
