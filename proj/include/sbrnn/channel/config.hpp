#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace sbrnn::channel {

/// Physical and converter parameters of the un-amplified IM/DD link. Units
/// follow the usual link-budget conventions: ps/nm/km, dB/km, nm, km, GHz,
/// GSa/s.
struct ChannelConfig {
    double dispersion_ps_nm_km = 17.0;
    double attenuation_db_km = 0.2;
    double wavelength_nm = 1550.0;
    double length_km = 0.0;
    double lpf_cutoff_ghz = 32.0;
    double dac_rate_gsps = 84.0;
    unsigned oversampling = 4;
    double enob = 6.0;
    /// Variance of the additive receiver noise, in the squared units of the
    /// photodiode output.
    double receiver_noise_variance = 2.455e-4;
    bool dac_noise = true;
    bool receiver_noise = true;
    bool adc_noise = true;

    [[nodiscard]] double simulation_rate_gsps() const { return dac_rate_gsps * oversampling; }

    /// Quantization step for a converter spanning the transmitter range
    /// [0, pi/4].
    [[nodiscard]] double quantization_step() const { return (std::numbers::pi / 4.0) / std::exp2(enob); }

    void validate() const
    {
        if (oversampling < 1) throw std::invalid_argument("channel: oversampling must be >= 1");
        if (length_km < 0.0) throw std::invalid_argument("channel: fiber length must be >= 0");
        if (receiver_noise_variance < 0.0) throw std::invalid_argument("channel: receiver noise variance < 0");
        if (dac_rate_gsps <= 0.0) throw std::invalid_argument("channel: DAC rate must be positive");
        if (lpf_cutoff_ghz <= 0.0 || lpf_cutoff_ghz >= simulation_rate_gsps() / 2.0)
            throw std::invalid_argument("channel: LPF cutoff must lie below the simulation Nyquist frequency");
        if (enob <= 0.0) throw std::invalid_argument("channel: ENOB must be positive");
    }

    void disable_noise() { dac_noise = receiver_noise = adc_noise = false; }
};

/// Seeds for the three noise stages of one channel pass. Equal draws give
/// bit-identical noise.
struct NoiseDraw {
    std::uint64_t stream = 0;
    std::uint64_t dac_seed = 0;
    std::uint64_t receiver_seed = 0;
    std::uint64_t adc_seed = 0;

    /// Deterministic draw for (stream, index).
    static NoiseDraw derive(std::uint64_t stream, std::uint64_t index)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                          static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x4e4f4953u};
        std::mt19937_64 gen(seq);
        return {stream, gen(), gen(), gen()};
    }

    friend bool operator==(const NoiseDraw&, const NoiseDraw&) = default;
};

} // namespace sbrnn::channel
