#pragma once

#include "sbrnn/harness/systems.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace sbrnn::harness {

struct GradCheckOptions {
    std::size_t messages = 4;
    std::size_t block = 6;
    std::size_t window = 3;
    std::size_t batch = 2;
    double distance_km = 20.0;
    double step = 1e-4;
    /// Denominator floor of the relative error, so that vanishing gradients
    /// are compared in absolute terms.
    double floor = 1e-6;
    std::uint64_t seed = 7;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst; // "<param>[index]"
    std::size_t checked = 0;
    std::size_t skipped = 0; // probes straddling an activation kink
};

/// Central-difference check of every coordinate in `inputs` against the
/// gradient accumulated by the tape. `build` records the scalar loss.
inline GradCheckResult finite_difference_check(const std::function<nn::Var(nn::Tape&)>& build,
                                               std::vector<nn::Parameter*> inputs, double h, double floor)
{
    auto run = [&](bool with_grad, std::uint64_t* signature) {
        nn::Tape tape;
        const nn::Var loss = build(tape);
        if (signature) *signature = tape.activation_signature();
        if (with_grad) {
            for (auto* p : inputs) p->zero_grad();
            tape.backward(loss);
        }
        return tape.value(loss)[0];
    };
    std::uint64_t base_sig = 0;
    run(true, &base_sig);

    GradCheckResult result;
    for (auto* p : inputs) {
        const nn::Buffer analytic = p->grad;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            std::uint64_t sig_plus = 0;
            std::uint64_t sig_minus = 0;
            p->value[i] = saved + h;
            const double up = run(false, &sig_plus);
            p->value[i] = saved - h;
            const double down = run(false, &sig_minus);
            p->value[i] = saved;
            if (sig_plus != base_sig || sig_minus != base_sig) {
                ++result.skipped;
                continue;
            }
            const double numeric = (up - down) / (2.0 * h);
            const double rel = std::abs(analytic[i] - numeric) /
                               std::max({std::abs(analytic[i]), std::abs(numeric), floor});
            ++result.checked;
            if (rel > result.max_relative_error || result.worst.empty()) {
                result.max_relative_error = rel;
                result.worst = p->name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

inline channel::ChannelConfig check_channel_config(const GradCheckOptions& opt)
{
    channel::ChannelConfig ch;
    ch.length_km = opt.distance_km;
    return ch;
}

/// Gradient of the full autoencoder loss (Tx, channel, Rx) with respect to
/// every weight, with the noise realization and random initial states held
/// fixed.
inline GradCheckResult grad_check_transceiver(model::CellKind cell, const GradCheckOptions& opt = {})
{
    model::Transceiver net({opt.messages, opt.block, cell, opt.window}, opt.seed);
    std::mt19937_64 rng(opt.seed + 1);
    std::uniform_real_distribution<double> tx_state(0.0, nn::kClipLevel);
    std::uniform_real_distribution<double> rx_state(0.0, 1.0);
    auto random_tensor = [&](std::size_t r, std::size_t c, auto& dist) {
        nn::Tensor t = nn::Tensor::matrix(r, c);
        for (double& v : t.values) v = dist(rng);
        return t;
    };
    const auto& cfg = net.config();
    const nn::Tensor tx_f = random_tensor(opt.batch, cfg.tx_state(), tx_state);
    const nn::Tensor tx_b = random_tensor(opt.batch, cfg.tx_state(), tx_state);
    const nn::Tensor rx_f = random_tensor(opt.batch, cfg.rx_state(), rx_state);
    const nn::Tensor rx_b = random_tensor(opt.batch, cfg.rx_state(), rx_state);

    TrainingSource source(opt.batch, opt.seed);
    const Slots slots = source.next_windows(opt.window, static_cast<std::uint32_t>(opt.messages));
    StepContext ctx;
    ctx.link = std::make_shared<const channel::ImddChannel>(check_channel_config(opt));
    ctx.draw = channel::NoiseDraw::derive(opt.seed, 0);

    auto build = [&](nn::Tape& tape) {
        auto bound = net.bind(tape);
        const auto tx = model::tx_encode(tape, bound, slots, tape.constant(tx_f), tape.constant(tx_b));
        const auto received = through_channel(tape, tx.blocks, ctx);
        const auto rx = model::rx_decode(tape, bound, received, tape.constant(rx_f), tape.constant(rx_b));
        return mean_cross_entropy(tape, rx.probs, slots);
    };
    std::vector<nn::Parameter*> params;
    for (auto& p : net.params()) params.push_back(&p);
    return finite_difference_check(build, params, opt.step, opt.floor);
}

/// Gradient of a random linear functional of the channel output with
/// respect to the channel input.
inline GradCheckResult grad_check_channel(const GradCheckOptions& opt = {})
{
    const auto link = std::make_shared<const channel::ImddChannel>(check_channel_config(opt));
    std::mt19937_64 rng(opt.seed + 2);
    std::uniform_real_distribution<double> drive(0.0, nn::kClipLevel);
    std::normal_distribution<double> weight(0.0, 1.0);
    nn::Parameter x("x", nn::Tensor::matrix(opt.batch * opt.window, opt.block));
    for (double& v : x.value.values) v = drive(rng);
    std::vector<double> w(x.value.size());
    for (double& v : w) v = weight(rng);
    const auto draw = channel::NoiseDraw::derive(opt.seed, 1);

    auto build = [&](nn::Tape& tape) {
        return nn::weighted_sum(tape, channel::transmit(tape, tape.parameter(x), link, draw), w);
    };
    return finite_difference_check(build, {&x}, opt.step, opt.floor);
}

} // namespace sbrnn::harness
