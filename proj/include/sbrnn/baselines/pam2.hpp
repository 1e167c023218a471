#pragma once

#include "sbrnn/model/transceiver.hpp"
#include "sbrnn/nn/activations.hpp"
#include "sbrnn/nn/ops.hpp"
#include "sbrnn/nn/params.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbrnn::baselines {

/// Two-level intensity modulation with raised-cosine shaping and a
/// multi-symbol feed-forward receiver estimating the central symbol.
struct Pam2Config {
    std::size_t samples_per_symbol = 8; // g
    double rolloff = 0.25;
    std::size_t window = 61; // Z, symbols seen by the receiver
    std::size_t layers = 9;  // L, input + hidden + softmax output
    std::size_t span_symbols = 16;
    double high_level = nn::kClipLevel;

    void validate() const
    {
        if (samples_per_symbol < 1) throw std::invalid_argument("pam2: g must be >= 1");
        if (rolloff < 0.0 || rolloff > 1.0) throw std::invalid_argument("pam2: roll-off must lie in [0, 1]");
        if (window % 2 == 0) throw std::invalid_argument("pam2: Z must be odd");
        if (layers < 3) throw std::invalid_argument("pam2: need at least one hidden layer");
        if ((window * samples_per_symbol) >> (layers - 3) == 0)
            throw std::invalid_argument("pam2: too many layers for Zg inputs");
    }

    [[nodiscard]] std::size_t input_width() const { return window * samples_per_symbol; }
};

/// Continuous-time raised-cosine impulse response at t (in symbol periods).
inline double raised_cosine(double t, double rolloff)
{
    const double sinc = t == 0.0 ? 1.0 : std::sin(std::numbers::pi * t) / (std::numbers::pi * t);
    const double x = 2.0 * rolloff * t;
    if (rolloff > 0.0 && std::abs(std::abs(x) - 1.0) < 1e-12)
        return std::numbers::pi / 4.0 * (std::sin(std::numbers::pi / (2.0 * rolloff)) /
                                         (std::numbers::pi / (2.0 * rolloff)));
    return sinc * std::cos(std::numbers::pi * rolloff * t) / (1.0 - x * x);
}

/// RC taps at g samples per symbol over +-span symbols; unit peak at the
/// centre tap (index span * g).
inline std::vector<double> rc_kernel(std::size_t samples_per_symbol, double rolloff, std::size_t span_symbols = 16)
{
    if (rolloff < 0.0 || rolloff > 1.0) throw std::invalid_argument("rc_kernel: roll-off must lie in [0, 1]");
    const std::size_t half = span_symbols * samples_per_symbol;
    std::vector<double> h(2 * half + 1);
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double t = (static_cast<double>(i) - static_cast<double>(half)) / static_cast<double>(samples_per_symbol);
        h[i] = raised_cosine(t, rolloff);
    }
    return h;
}

/// Convolves a sample-rate impulse train with the centred RC kernel; output
/// has the input's length.
inline std::vector<double> rc_filter(std::span<const double> impulses, double rolloff, std::size_t samples_per_symbol,
                                     std::size_t span_symbols = 16)
{
    const auto h = rc_kernel(samples_per_symbol, rolloff, span_symbols);
    const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
    const auto len = static_cast<std::ptrdiff_t>(impulses.size());
    std::vector<double> y(impulses.size(), 0.0);
    for (std::ptrdiff_t k = 0; k < len; ++k) {
        const double a = impulses[static_cast<std::size_t>(k)];
        if (a == 0.0) continue;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, k - half);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len - 1, k + half);
        for (std::ptrdiff_t i = lo; i <= hi; ++i)
            y[static_cast<std::size_t>(i)] += a * h[static_cast<std::size_t>(i - k + half)];
    }
    return y;
}

/// Offset of a symbol's centre sample inside its g-sample slot.
inline std::size_t symbol_center(std::size_t samples_per_symbol) { return samples_per_symbol / 2; }

/// Bits to an RC-shaped waveform with levels {0, high}; symbol k is centred
/// on sample k g + g/2.
inline std::vector<double> pam2_modulate(std::span<const std::uint8_t> bits, const Pam2Config& cfg)
{
    const std::size_t g = cfg.samples_per_symbol;
    std::vector<double> impulses(bits.size() * g, 0.0);
    for (std::size_t k = 0; k < bits.size(); ++k) {
        if (bits[k] > 1) throw std::invalid_argument("pam2_modulate: bits must be 0 or 1");
        impulses[k * g + symbol_center(g)] = bits[k] ? cfg.high_level : 0.0;
    }
    return rc_filter(impulses, cfg.rolloff, g, cfg.span_symbols);
}

/// Layer widths of the receiver: Zg input, floor(Zg / 2^(l-1)) for hidden
/// layer l = 1..L-2, and 2 outputs.
inline model::NetworkWidths pam2_receiver_widths(const Pam2Config& cfg)
{
    const std::size_t zg = cfg.input_width();
    model::NetworkWidths w{zg};
    for (std::size_t l = 1; l + 2 <= cfg.layers; ++l) w.push_back(zg >> (l - 1));
    w.push_back(2);
    return w;
}

inline std::size_t pam2_param_count(const Pam2Config& cfg) { return model::node_count({pam2_receiver_widths(cfg)}); }

/// Feed-forward equalizer over Zg received samples.
class Pam2Receiver {
public:
    Pam2Receiver(Pam2Config cfg, std::uint64_t seed) : cfg_(cfg)
    {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        const auto w = pam2_receiver_widths(cfg_);
        for (std::size_t l = 1; l < w.size(); ++l) {
            const bool last = l + 1 == w.size();
            layers_.push_back({last ? std::string("rx.out") : "rx.l" + std::to_string(l), w[l - 1], w[l],
                               last ? nn::Activation::softmax : nn::Activation::relu, {}});
            nn::add_dense(params_, layers_.back(), rng);
        }
    }

    [[nodiscard]] const Pam2Config& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    [[nodiscard]] const nn::ParamSet& params() const { return params_; }

    /// Posteriors over {0, 1} for each row of Zg samples.
    nn::Var forward(nn::Tape& tape, nn::Var windows)
    {
        nn::Var h = windows;
        for (const auto& layer : layers_) {
            h = nn::affine(tape, h, tape.parameter(params_.at(layer.weight_name())),
                           tape.parameter(params_.at(layer.bias_name())));
            h = model::activate(tape, h, layer.activation);
        }
        return h;
    }

    /// Window start samples for estimating symbols first..first+count-1 as the
    /// central symbol.
    [[nodiscard]] std::vector<std::size_t> window_starts(std::size_t first, std::size_t count) const
    {
        const std::size_t half = (cfg_.window - 1) / 2;
        if (first < half) throw std::invalid_argument("pam2: central symbol lacks preceding context");
        std::vector<std::size_t> starts(count);
        for (std::size_t i = 0; i < count; ++i) starts[i] = (first + i - half) * cfg_.samples_per_symbol;
        return starts;
    }

private:
    Pam2Config cfg_;
    nn::ParamSet params_;
    std::vector<nn::DenseLayer> layers_;
};

/// Sliding central-symbol equalization over a received waveform carrying
/// `symbols` symbols. Row i of the result is the posterior of symbol
/// i + (Z-1)/2; there are symbols - Z + 1 rows.
inline nn::Tensor rx_ffnn_equalize(Pam2Receiver& rx, std::span<const double> received, std::size_t symbols)
{
    const auto& cfg = rx.config();
    if (received.size() < symbols * cfg.samples_per_symbol || symbols < cfg.window)
        throw std::invalid_argument("rx_ffnn_equalize: not enough samples for one window");
    nn::Tape tape;
    const nn::Var series = tape.constant(nn::Tensor({received.size()}, std::vector<double>(received.begin(), received.end())));
    const std::size_t count = symbols - cfg.window + 1;
    const nn::Var windows =
        nn::gather_windows(tape, series, rx.window_starts((cfg.window - 1) / 2, count), cfg.input_width());
    return tape.value(rx.forward(tape, windows));
}

} // namespace sbrnn::baselines
