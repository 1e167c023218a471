#pragma once

#include "sbrnn/estimation/metrics.hpp"
#include "sbrnn/model/transceiver.hpp"
#include "sbrnn/nn/ops.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace sbrnn::estimation {

/// Which receiver states are handed from one window to the next.
///
/// `forward`: the forward state entering window k+1 is the forward output of
/// window k at its first slot; the backward pass restarts from zero.
/// `both`: additionally the backward pass starts from window k's backward
/// output at its first slot. `none`: every window starts from zero.
enum class CarryRule { none, forward, both };

inline std::string to_string(CarryRule r)
{
    switch (r) {
    case CarryRule::none: return "none";
    case CarryRule::forward: return "forward";
    case CarryRule::both: return "both";
    }
    return "?";
}

inline CarryRule parse_carry_rule(const std::string& s)
{
    if (s == "none") return CarryRule::none;
    if (s == "forward") return CarryRule::forward;
    if (s == "both") return CarryRule::both;
    throw std::invalid_argument("unknown carry rule: " + s);
}

/// Per-slot averaged posteriors. Row i of `probs` sums to one; counts[i] is
/// the number of windows averaged into it.
struct FusedPosterior {
    nn::Tensor probs;
    std::vector<std::size_t> counts;

    [[nodiscard]] std::size_t slots() const { return counts.size(); }
};

/// Averages raw window outputs. windows[k] holds the W x M posteriors of the
/// window covering slots k..k+W-1. Slot i receives the average over all
/// windows covering it among the first T = windows.size() windows; the W-1
/// trailing slots seen only by partial coverage are dropped.
inline FusedPosterior fuse_windows(const std::vector<nn::Tensor>& windows)
{
    if (windows.empty()) throw std::invalid_argument("fuse_windows: no windows");
    const std::size_t width = windows[0].rows();
    const std::size_t alphabet = windows[0].cols();
    const std::size_t slots = windows.size();
    FusedPosterior out{nn::Tensor::matrix(slots, alphabet), std::vector<std::size_t>(slots, 0)};
    for (std::size_t k = 0; k < windows.size(); ++k) {
        if (windows[k].rows() != width || windows[k].cols() != alphabet)
            throw std::invalid_argument("fuse_windows: inconsistent window shapes");
        for (std::size_t j = 0; j < width && k + j < slots; ++j) {
            auto dst = out.probs.row(k + j);
            auto src = windows[k].row(j);
            for (std::size_t c = 0; c < alphabet; ++c) dst[c] += src[c];
            ++out.counts[k + j];
        }
    }
    for (std::size_t i = 0; i < slots; ++i) {
        const double inv = 1.0 / static_cast<double>(out.counts[i]);
        for (double& v : out.probs.row(i)) v *= inv;
    }
    return out;
}

namespace detail {

inline void check_received(const model::Transceiver& net, const nn::Tensor& received, std::size_t window)
{
    if (window < 1) throw std::invalid_argument("sliding_estimate: W must be >= 1");
    if (received.cols() != net.config().block)
        throw std::invalid_argument("sliding_estimate: block length mismatch");
    if (received.rows() < window)
        throw std::invalid_argument("sliding_estimate: " + std::to_string(received.rows()) +
                                    " received blocks is fewer than W = " + std::to_string(window));
}

inline nn::Tensor zeros(std::size_t rows, std::size_t cols) { return nn::Tensor::matrix(rows, cols); }

inline std::vector<std::size_t> iota_from(std::size_t start, std::size_t count)
{
    std::vector<std::size_t> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = start + i;
    return v;
}

} // namespace detail

/// Raw receiver posteriors of every window, one window at a time with
/// explicit state hand-off. Reference path for all carry rules.
inline std::vector<nn::Tensor> window_posteriors_sequential(model::Transceiver& net, const nn::Tensor& received,
                                                            std::size_t window, CarryRule rule)
{
    detail::check_received(net, received, window);
    const std::size_t total = received.rows() - window + 1;
    const std::size_t state = net.config().rx_state();
    nn::Tensor carry_f = detail::zeros(1, state);
    nn::Tensor carry_b = detail::zeros(1, state);
    std::vector<nn::Tensor> out;
    out.reserve(total);
    for (std::size_t k = 0; k < total; ++k) {
        nn::Tape tape;
        auto bound = net.bind(tape);
        const nn::Var rx = tape.constant(received);
        std::vector<nn::Var> blocks;
        for (std::size_t j = 0; j < window; ++j) blocks.push_back(nn::gather_rows(tape, rx, {k + j}));
        const nn::Var init_f = tape.constant(rule == CarryRule::none ? detail::zeros(1, state) : carry_f);
        const nn::Var init_b = tape.constant(rule == CarryRule::both ? carry_b : detail::zeros(1, state));
        const auto res = model::rx_decode(tape, bound, blocks, init_f, init_b);
        nn::Tensor w = nn::Tensor::matrix(window, net.config().messages);
        for (std::size_t j = 0; j < window; ++j) {
            const auto& p = tape.value(res.probs[j]).values;
            std::copy(p.begin(), p.end(), w.row(j).begin());
        }
        out.push_back(std::move(w));
        carry_f = tape.value(res.forward.front());
        carry_b = tape.value(res.backward.front());
    }
    return out;
}

/// Raw receiver posteriors of every window. For the `none` and `forward`
/// rules all windows are decoded together as rows of one batch; with
/// `forward`, the forward states are those of a single pass over the whole
/// received sequence. `both` falls back to the sequential path.
inline std::vector<nn::Tensor> window_posteriors(model::Transceiver& net, const nn::Tensor& received,
                                                 std::size_t window, CarryRule rule)
{
    if (rule == CarryRule::both) return window_posteriors_sequential(net, received, window, rule);
    detail::check_received(net, received, window);
    const std::size_t length = received.rows();
    const std::size_t total = length - window + 1;
    const std::size_t state = net.config().rx_state();
    const std::size_t block = net.config().block;

    nn::Tape tape;
    auto bound = net.bind(tape);
    const nn::Var rx = tape.constant(received);

    std::vector<nn::Segment> window_inputs(window);
    for (std::size_t j = 0; j < window; ++j)
        window_inputs[j] = nn::Segment::of(nn::gather_rows(tape, rx, detail::iota_from(j, total)), block);

    std::vector<nn::Var> forward(window);
    if (rule == CarryRule::forward) {
        std::vector<nn::Segment> inputs(length);
        for (std::size_t t = 0; t < length; ++t) inputs[t] = nn::Segment::of(nn::gather_rows(tape, rx, {t}), block);
        const auto states = model::run_direction(tape, bound.rx_forward, inputs,
                                                 tape.constant(detail::zeros(1, state)), false);
        const nn::Var stacked = nn::concat_rows(tape, states);
        for (std::size_t j = 0; j < window; ++j) forward[j] = nn::gather_rows(tape, stacked, detail::iota_from(j, total));
    } else {
        forward = model::run_direction(tape, bound.rx_forward, window_inputs,
                                       tape.constant(detail::zeros(total, state)), false);
    }
    const auto backward = model::run_direction(tape, bound.rx_backward, window_inputs,
                                               tape.constant(detail::zeros(total, state)), true);

    const std::size_t alphabet = net.config().messages;
    std::vector<nn::Tensor> out(total, nn::Tensor::matrix(window, alphabet));
    for (std::size_t j = 0; j < window; ++j) {
        const nn::Tensor& p = tape.value(model::rx_readout(tape, bound, forward[j], backward[j]));
        for (std::size_t k = 0; k < total; ++k) std::copy(p.row(k).begin(), p.row(k).end(), out[k].row(j).begin());
    }
    return out;
}

/// Sliding-window estimate over received blocks (rows) for the first
/// rows - W + 1 slots.
inline FusedPosterior sliding_estimate(model::Transceiver& net, const nn::Tensor& received, std::size_t window,
                                       CarryRule rule = CarryRule::forward)
{
    return fuse_windows(window_posteriors(net, received, window, rule));
}

/// Hard decisions for each fused slot.
inline std::vector<std::uint32_t> decide_all(const FusedPosterior& fused)
{
    std::vector<std::uint32_t> out(fused.slots());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = decide(fused.probs.row(i));
    return out;
}

} // namespace sbrnn::estimation
