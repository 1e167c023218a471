#pragma once

#include "sbrnn/channel/config.hpp"
#include "sbrnn/channel/fft.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace sbrnn::channel {

/// Real-valued electrical signal.
struct Waveform {
    std::vector<double> samples;
    double rate_gsps = 0.0;
};

/// Complex optical field envelope.
struct OpticalField {
    std::vector<Complex> samples;
    double rate_gsps = 0.0;
};

/// Speed of light in nm/ps.
inline constexpr double kSpeedOfLightNmPerPs = 299792.458;

/// Group-velocity dispersion beta2 [ps^2/km] from the dispersion parameter
/// D [ps/nm/km] at wavelength lambda [nm]: beta2 = -D lambda^2 / (2 pi c).
inline double beta2_ps2_per_km(double dispersion_ps_nm_km, double wavelength_nm)
{
    return -dispersion_ps_nm_km * wavelength_nm * wavelength_nm / (2.0 * std::numbers::pi * kSpeedOfLightNmPerPs);
}

// ---------------------------------------------------------------------------
// Brick-wall low-pass filter

inline void brickwall_lpf_inplace(std::span<double> x, double rate_gsps, double cutoff_ghz)
{
    if (cutoff_ghz >= rate_gsps / 2.0) throw std::invalid_argument("brickwall_lpf: cutoff must be below Nyquist");
    if (x.empty()) return;
    std::vector<Complex> spec(x.begin(), x.end());
    fft_inplace(spec);
    for (std::size_t k = 0; k < spec.size(); ++k)
        if (std::abs(bin_frequency(k, spec.size(), rate_gsps)) > cutoff_ghz) spec[k] = 0.0;
    ifft_inplace(spec);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = spec[i].real();
}

/// Zeroes every DFT bin above `cutoff_ghz`. The operator is an orthogonal
/// projection, so it is its own adjoint.
inline Waveform brickwall_lpf(Waveform w, double cutoff_ghz)
{
    brickwall_lpf_inplace(w.samples, w.rate_gsps, cutoff_ghz);
    return w;
}

// ---------------------------------------------------------------------------
// Additive noise

inline std::vector<double> quantization_noise(std::size_t count, double step, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-step / 2.0, step / 2.0);
    std::vector<double> u(count);
    for (double& v : u) v = dist(gen);
    return u;
}

inline std::vector<double> gaussian_noise(std::size_t count, double variance, std::uint64_t seed)
{
    if (variance < 0.0) throw std::invalid_argument("gaussian_noise: variance < 0");
    std::vector<double> g(count, 0.0);
    if (variance == 0.0) return g;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, std::sqrt(variance));
    for (double& v : g) v = dist(gen);
    return g;
}

/// Uniform noise on [-step/2, step/2], step = (pi/4) / 2^enob.
inline Waveform add_quantization_noise(Waveform w, double enob, std::uint64_t seed, bool enabled = true)
{
    if (!enabled) return w;
    const double step = (std::numbers::pi / 4.0) / std::exp2(enob);
    const auto u = quantization_noise(w.samples.size(), step, seed);
    for (std::size_t i = 0; i < u.size(); ++i) w.samples[i] += u[i];
    return w;
}

inline Waveform add_receiver_noise(Waveform w, double variance, std::uint64_t seed)
{
    if (variance < 0.0) throw std::invalid_argument("add_receiver_noise: variance < 0");
    const auto g = gaussian_noise(w.samples.size(), variance, seed);
    for (std::size_t i = 0; i < g.size(); ++i) w.samples[i] += g[i];
    return w;
}

// ---------------------------------------------------------------------------
// Electro-optic conversion

/// Mach-Zehnder modulator: field = sin(drive).
inline OpticalField mzm(const Waveform& w)
{
    OpticalField e{std::vector<Complex>(w.samples.size()), w.rate_gsps};
    for (std::size_t i = 0; i < w.samples.size(); ++i) e.samples[i] = std::sin(w.samples[i]);
    return e;
}

/// Square-law detection: |E|^2.
inline Waveform photodiode(const OpticalField& e)
{
    Waveform y{std::vector<double>(e.samples.size()), e.rate_gsps};
    for (std::size_t i = 0; i < e.samples.size(); ++i) y.samples[i] = std::norm(e.samples[i]);
    return y;
}

// ---------------------------------------------------------------------------
// Fiber

/// Fiber transfer function on the DFT grid of an n-point sequence:
/// H(f) = 10^(-alpha L / 20) exp(-j (beta2 / 2) (2 pi f)^2 L).
inline std::vector<Complex> fiber_response(std::size_t n, double rate_gsps, const ChannelConfig& cfg)
{
    const double b2 = beta2_ps2_per_km(cfg.dispersion_ps_nm_km, cfg.wavelength_nm);
    const double gain = std::pow(10.0, -cfg.attenuation_db_km * cfg.length_km / 20.0);
    std::vector<Complex> h(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double omega = 2.0 * std::numbers::pi * bin_frequency(k, n, rate_gsps) * 1e-3; // rad/ps
        const double phase = -(b2 / 2.0) * omega * omega * cfg.length_km;
        h[k] = gain * Complex(std::cos(phase), std::sin(phase));
    }
    return h;
}

/// Applies H (or conj(H) when `adjoint`) by circular convolution.
inline void apply_fiber_inplace(std::span<Complex> field, std::span<const Complex> response, bool adjoint = false)
{
    if (field.size() != response.size()) throw std::invalid_argument("fiber: response length mismatch");
    fft_inplace(field);
    for (std::size_t k = 0; k < field.size(); ++k) field[k] *= adjoint ? std::conj(response[k]) : response[k];
    ifft_inplace(field);
}

inline OpticalField fiber_propagate(OpticalField e, const ChannelConfig& cfg)
{
    if (cfg.length_km == 0.0) return e;
    const auto h = fiber_response(e.samples.size(), e.rate_gsps, cfg);
    apply_fiber_inplace(e.samples, h);
    return e;
}

} // namespace sbrnn::channel
