#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace sbrnn::nn {

/// Upper clipping level of the transmitter activation; keeps the MZM drive in
/// its linear region.
inline constexpr double kClipLevel = std::numbers::pi / 4.0;

/// Floor applied inside the log of the cross entropy.
inline constexpr double kLogFloor = 1e-12;

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// relu'(0) = 0
inline double relu_derivative(double x) { return x > 0.0 ? 1.0 : 0.0; }

/// relu(x) - relu(x - pi/4), evaluated as a clamp so the range is exact.
inline double clip_tx(double x) { return std::clamp(x, 0.0, kClipLevel); }

// Zero at both kinks: the flat regions are closed.
inline double clip_tx_derivative(double x) { return (x > 0.0 && x < kClipLevel) ? 1.0 : 0.0; }

inline double sigmoid(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline std::vector<double> relu(std::span<const double> x)
{
    std::vector<double> y(x.size());
    std::transform(x.begin(), x.end(), y.begin(), [](double v) { return relu(v); });
    return y;
}

inline std::vector<double> clip_tx(std::span<const double> x)
{
    std::vector<double> y(x.size());
    std::transform(x.begin(), x.end(), y.begin(), [](double v) { return clip_tx(v); });
    return y;
}

inline std::vector<double> sigmoid(std::span<const double> x)
{
    std::vector<double> y(x.size());
    std::transform(x.begin(), x.end(), y.begin(), [](double v) { return sigmoid(v); });
    return y;
}

/// Max-shifted softmax written into `out` (may alias `x`).
inline void softmax_into(std::span<const double> x, std::span<double> out)
{
    if (x.empty()) throw std::invalid_argument("softmax: empty input");
    double peak = x[0];
    for (double v : x) {
        if (!std::isfinite(v)) throw std::domain_error("softmax: non-finite input");
        peak = std::max(peak, v);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - peak);
        total += out[i];
    }
    for (double& v : out) v /= total;
}

inline std::vector<double> softmax(std::span<const double> x)
{
    std::vector<double> y(x.size());
    softmax_into(x, y);
    return y;
}

/// -log(max(p[target], floor)) for a single posterior; `target` is zero-based.
inline double cross_entropy(std::span<const double> probs, std::size_t target)
{
    if (target >= probs.size()) throw std::out_of_range("cross_entropy: target out of range");
    return -std::log(std::max(probs[target], kLogFloor));
}

} // namespace sbrnn::nn
