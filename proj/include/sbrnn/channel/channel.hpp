#pragma once

#include "sbrnn/channel/config.hpp"
#include "sbrnn/channel/stages.hpp"
#include "sbrnn/nn/ops.hpp"

#include <map>
#include <memory>
#include <span>
#include <vector>

namespace sbrnn::channel {

/// Intermediate values of one forward pass, kept for the adjoint.
struct ChannelTrace {
    std::vector<double> modulator_drive; // after Tx LPF and DAC noise
    std::vector<Complex> received_field; // after fiber
};

/// The full link at the simulation rate:
///
///   Tx LPF -> +DAC noise -> MZM -> fiber -> PD -> +receiver noise -> Rx LPF -> +ADC noise
///
/// Noise enters additively, so the pass is differentiable in the input with
/// the noise realization held fixed by its NoiseDraw.
class ImddChannel {
public:
    explicit ImddChannel(ChannelConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    [[nodiscard]] const ChannelConfig& config() const { return cfg_; }
    [[nodiscard]] double rate() const { return cfg_.simulation_rate_gsps(); }

    std::vector<double> forward(std::span<const double> tx, const NoiseDraw& draw, ChannelTrace* trace = nullptr) const
    {
        const std::size_t n = tx.size();
        std::vector<double> drive(tx.begin(), tx.end());
        brickwall_lpf_inplace(drive, rate(), cfg_.lpf_cutoff_ghz);
        if (cfg_.dac_noise) {
            const auto u = quantization_noise(n, cfg_.quantization_step(), draw.dac_seed);
            for (std::size_t i = 0; i < n; ++i) drive[i] += u[i];
        }

        std::vector<Complex> field(n);
        for (std::size_t i = 0; i < n; ++i) field[i] = std::sin(drive[i]);
        if (cfg_.length_km != 0.0) apply_fiber_inplace(field, response(n));

        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = std::norm(field[i]);
        if (cfg_.receiver_noise && cfg_.receiver_noise_variance > 0.0) {
            const auto g = gaussian_noise(n, cfg_.receiver_noise_variance, draw.receiver_seed);
            for (std::size_t i = 0; i < n; ++i) y[i] += g[i];
        }
        brickwall_lpf_inplace(y, rate(), cfg_.lpf_cutoff_ghz);
        if (cfg_.adc_noise) {
            const auto u = quantization_noise(n, cfg_.quantization_step(), draw.adc_seed);
            for (std::size_t i = 0; i < n; ++i) y[i] += u[i];
        }

        if (trace) {
            trace->modulator_drive = std::move(drive);
            trace->received_field = std::move(field);
        }
        return y;
    }

    Waveform forward(const Waveform& tx, const NoiseDraw& draw) const
    {
        return {forward(std::span<const double>(tx.samples), draw), tx.rate_gsps};
    }

    /// Vector-Jacobian product: gradient w.r.t. the input given the gradient
    /// w.r.t. the output of the traced pass.
    std::vector<double> backward(const ChannelTrace& trace, std::span<const double> grad_out) const
    {
        const std::size_t n = grad_out.size();
        std::vector<double> g(grad_out.begin(), grad_out.end());
        brickwall_lpf_inplace(g, rate(), cfg_.lpf_cutoff_ghz);

        // d|E|^2 = 2 Re(conj(E) dE), so the field gradient is 2 E g.
        std::vector<Complex> gf(n);
        for (std::size_t i = 0; i < n; ++i) gf[i] = 2.0 * trace.received_field[i] * g[i];
        if (cfg_.length_km != 0.0) apply_fiber_inplace(gf, response(n), /*adjoint=*/true);

        std::vector<double> gx(n);
        for (std::size_t i = 0; i < n; ++i) gx[i] = std::cos(trace.modulator_drive[i]) * gf[i].real();
        brickwall_lpf_inplace(gx, rate(), cfg_.lpf_cutoff_ghz);
        return gx;
    }

private:
    std::span<const Complex> response(std::size_t n) const
    {
        auto it = responses_.find(n);
        if (it == responses_.end()) it = responses_.emplace(n, fiber_response(n, rate(), cfg_)).first;
        return it->second;
    }

    ChannelConfig cfg_;
    mutable std::map<std::size_t, std::vector<Complex>> responses_;
};

/// Records a channel pass on the tape. The whole tensor is treated as one
/// contiguous series; the output has the same shape.
inline nn::Var transmit(nn::Tape& tape, nn::Var series, std::shared_ptr<const ImddChannel> link,
                        const NoiseDraw& draw)
{
    const nn::Tensor& x = tape.value(series);
    auto trace = std::make_shared<ChannelTrace>();
    nn::Tensor out(x.shape, link->forward(x.values, draw, trace.get()));
    return tape.push(std::move(out), tape.requires_grad(series),
                     [series, link, trace](nn::Tape& t, std::size_t self) {
                         const auto gx = link->backward(*trace, t.grad(self));
                         auto gs = t.grad(series);
                         for (std::size_t i = 0; i < gx.size(); ++i) gs[i] += gx[i];
                     });
}

} // namespace sbrnn::channel
