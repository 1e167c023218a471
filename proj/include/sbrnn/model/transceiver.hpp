#pragma once

#include "sbrnn/nn/ops.hpp"
#include "sbrnn/nn/params.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbrnn::model {

/// Messages are 1-based, m in {1..M}.
using MessageSequence = std::vector<std::uint32_t>;

enum class CellKind { vanilla, lstm_gru };

inline std::string to_string(CellKind k) { return k == CellKind::vanilla ? "vanilla" : "lstm-gru"; }

inline CellKind parse_cell_kind(const std::string& s)
{
    if (s == "vanilla") return CellKind::vanilla;
    if (s == "lstm-gru" || s == "gru" || s == "lstm_gru") return CellKind::lstm_gru;
    throw std::invalid_argument("unknown cell kind: " + s);
}

struct TransceiverConfig {
    std::size_t messages = 64; // M
    std::size_t block = 48;    // n, samples per transmitted block
    CellKind cell = CellKind::vanilla;
    std::size_t window = 10; // W

    void validate() const
    {
        if (messages < 2) throw std::invalid_argument("transceiver: M must be >= 2");
        if (block < 1) throw std::invalid_argument("transceiver: n must be >= 1");
        if (window < 1) throw std::invalid_argument("transceiver: W must be >= 1");
    }

    [[nodiscard]] std::size_t layers_per_cell() const { return cell == CellKind::vanilla ? 1 : 3; }
    [[nodiscard]] std::size_t tx_state() const { return block; }
    [[nodiscard]] std::size_t rx_state() const { return 2 * messages; }
};

/// Widths of one feed-forward network, input layer first.
using NetworkWidths = std::vector<std::size_t>;

/// Every single-layer network inside the bidirectional transceiver: one per
/// cell layer and direction at each side, plus the softmax readout.
inline std::vector<NetworkWidths> architecture(const TransceiverConfig& cfg)
{
    const std::size_t m = cfg.messages;
    const std::size_t n = cfg.block;
    std::vector<NetworkWidths> nets;
    for (int direction = 0; direction < 2; ++direction)
        for (std::size_t l = 0; l < cfg.layers_per_cell(); ++l) nets.push_back({m + n, n});
    for (int direction = 0; direction < 2; ++direction)
        for (std::size_t l = 0; l < cfg.layers_per_cell(); ++l) nets.push_back({n + 2 * m, 2 * m});
    nets.push_back({4 * m, m});
    return nets;
}

inline std::size_t node_count(const std::vector<NetworkWidths>& nets)
{
    std::size_t total = 0;
    for (const auto& net : nets)
        for (std::size_t w : net) total += w;
    return total;
}

/// Node count of the transceiver as tabulated for the recurrent systems:
/// 15M + 6n (vanilla), 35M + 18n (LSTM-GRU).
inline std::size_t param_count(const TransceiverConfig& cfg) { return node_count(architecture(cfg)); }

// ---------------------------------------------------------------------------
// Cells

/// A recurrent cell bound to a tape. Vanilla cells use slot 0 only.
struct CellBinding {
    CellKind kind = CellKind::vanilla;
    std::size_t input = 0;
    std::size_t state = 0;
    nn::Activation activation = nn::Activation::relu;
    std::array<nn::Var, 3> weight{};
    std::array<nn::Var, 3> bias{};
};

inline nn::Var activate(nn::Tape& tape, nn::Var x, nn::Activation a)
{
    switch (a) {
    case nn::Activation::relu: return nn::relu(tape, x);
    case nn::Activation::clip_tx: return nn::clip_tx(tape, x);
    case nn::Activation::sigmoid: return nn::sigmoid(tape, x);
    case nn::Activation::softmax: return nn::softmax(tape, x);
    case nn::Activation::identity: return x;
    }
    throw std::logic_error("activate: unknown activation");
}

/// h_t = act(W [x_t; h_{t-1}] + b).
inline nn::Var vanilla_cell_step(nn::Tape& tape, const CellBinding& cell, const nn::Segment& input, nn::Var prev)
{
    if (input.width != cell.input) throw std::invalid_argument("vanilla_cell_step: input width mismatch");
    return activate(tape, nn::affine(tape, {input, nn::Segment::of(prev, cell.state)}, cell.weight[0], cell.bias[0]),
                    cell.activation);
}

/// Test hook: replaces a gate's output with a constant.
struct GateOverride {
    std::optional<double> reset;  // g^a
    std::optional<double> update; // g^b
};

/// g_a = sigmoid(W1 [x; h] + b1), g_b = sigmoid(W2 [x; h] + b2),
/// h_t = (1 - g_b) h + g_b act(W3 [x; g_a h] + b3).
inline nn::Var gru_cell_step(nn::Tape& tape, const CellBinding& cell, const nn::Segment& input, nn::Var prev,
                             const GateOverride& force = {})
{
    if (input.width != cell.input) throw std::invalid_argument("gru_cell_step: input width mismatch");
    const auto& prev_shape = tape.value(prev).shape;
    auto gate = [&](int k, const std::optional<double>& forced) {
        if (forced) return tape.constant(nn::Tensor(prev_shape, *forced));
        return nn::sigmoid(tape,
                           nn::affine(tape, {input, nn::Segment::of(prev, cell.state)}, cell.weight[k], cell.bias[k]));
    };
    const nn::Var reset = gate(0, force.reset);
    const nn::Var update = gate(1, force.update);
    const nn::Var gated = nn::mul(tape, reset, prev);
    const nn::Var candidate = activate(
        tape, nn::affine(tape, {input, nn::Segment::of(gated, cell.state)}, cell.weight[2], cell.bias[2]),
        cell.activation);
    return nn::add(tape, nn::mul(tape, nn::one_minus(tape, update), prev), nn::mul(tape, update, candidate));
}

inline nn::Var cell_step(nn::Tape& tape, const CellBinding& cell, const nn::Segment& input, nn::Var prev)
{
    return cell.kind == CellKind::vanilla ? vanilla_cell_step(tape, cell, input, prev)
                                          : gru_cell_step(tape, cell, input, prev);
}

/// Runs one direction over `inputs`; result[t] is the cell output at slot t
/// regardless of direction.
inline std::vector<nn::Var> run_direction(nn::Tape& tape, const CellBinding& cell,
                                          const std::vector<nn::Segment>& inputs, nn::Var initial, bool reverse)
{
    std::vector<nn::Var> out(inputs.size());
    nn::Var h = initial;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::size_t t = reverse ? inputs.size() - 1 - k : k;
        h = cell_step(tape, cell, inputs[t], h);
        out[t] = h;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transceiver

struct BoundTransceiver {
    TransceiverConfig cfg;
    CellBinding tx_forward, tx_backward, rx_forward, rx_backward;
    nn::Var readout_weight, readout_bias;
};

/// Parameters of the bidirectional transmitter and receiver. Forward and
/// backward directions have independent weights.
class Transceiver {
public:
    Transceiver(TransceiverConfig cfg, std::uint64_t seed) : cfg_(cfg)
    {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        const auto nets = architecture(cfg_);
        std::size_t k = 0;
        for (const char* dir : {"txf", "txb"})
            for (std::size_t l = 0; l < cfg_.layers_per_cell(); ++l, ++k)
                nn::add_dense(params_, {dir, nets[k][0], nets[k][1], nn::Activation::clip_tx, layer_suffix(l)}, rng);
        for (const char* dir : {"rxf", "rxb"})
            for (std::size_t l = 0; l < cfg_.layers_per_cell(); ++l, ++k)
                nn::add_dense(params_, {dir, nets[k][0], nets[k][1], nn::Activation::relu, layer_suffix(l)}, rng);
        nn::add_dense(params_, {"softmax", nets[k][0], nets[k][1], nn::Activation::softmax, ""}, rng);
    }

    [[nodiscard]] const TransceiverConfig& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    [[nodiscard]] const nn::ParamSet& params() const { return params_; }

    /// Tensor-name suffix of a cell layer: "" for vanilla ("txf.W"), "1".."3"
    /// for the gated cell ("txf.W1").
    [[nodiscard]] std::string layer_suffix(std::size_t layer) const
    {
        return cfg_.cell == CellKind::vanilla ? std::string{} : std::to_string(layer + 1);
    }

    BoundTransceiver bind(nn::Tape& tape)
    {
        BoundTransceiver b{cfg_, {}, {}, {}, {}, {}, {}};
        auto bind_cell = [&](const char* dir, std::size_t input, std::size_t state, nn::Activation act) {
            CellBinding c{cfg_.cell, input, state, act, {}, {}};
            for (std::size_t l = 0; l < cfg_.layers_per_cell(); ++l) {
                const std::string suffix = layer_suffix(l);
                c.weight[l] = tape.parameter(params_.at(std::string(dir) + ".W" + suffix));
                c.bias[l] = tape.parameter(params_.at(std::string(dir) + ".b" + suffix));
            }
            return c;
        };
        const std::size_t m = cfg_.messages;
        const std::size_t n = cfg_.block;
        b.tx_forward = bind_cell("txf", m, n, nn::Activation::clip_tx);
        b.tx_backward = bind_cell("txb", m, n, nn::Activation::clip_tx);
        b.rx_forward = bind_cell("rxf", n, 2 * m, nn::Activation::relu);
        b.rx_backward = bind_cell("rxb", n, 2 * m, nn::Activation::relu);
        b.readout_weight = tape.parameter(params_.at("softmax.W"));
        b.readout_bias = tape.parameter(params_.at("softmax.b"));
        return b;
    }

private:
    TransceiverConfig cfg_;
    nn::ParamSet params_;
};

/// Zero-based one-hot indices for a batch of messages at one slot.
inline std::vector<std::size_t> message_indices(std::span<const std::uint32_t> messages, std::size_t alphabet)
{
    std::vector<std::size_t> idx(messages.size());
    for (std::size_t r = 0; r < messages.size(); ++r) {
        if (messages[r] < 1 || messages[r] > alphabet)
            throw std::out_of_range("message " + std::to_string(messages[r]) + " outside 1.." +
                                    std::to_string(alphabet));
        idx[r] = messages[r] - 1;
    }
    return idx;
}

struct TxOutput {
    std::vector<nn::Var> blocks; // merged h_t per slot, rows = batch
    nn::Var forward_final;       // forward output at the last slot
    nn::Var backward_final;      // backward output at the first slot
};

/// Transmitter BRNN. `slots[t][r]` is the message of batch row r at slot t;
/// merged output is the average of both directions.
inline TxOutput tx_encode(nn::Tape& tape, const BoundTransceiver& net,
                          const std::vector<std::vector<std::uint32_t>>& slots, nn::Var init_forward,
                          nn::Var init_backward)
{
    if (slots.empty()) throw std::invalid_argument("tx_encode: empty sequence");
    std::vector<nn::Segment> inputs;
    inputs.reserve(slots.size());
    for (const auto& s : slots) inputs.push_back(nn::Segment::onehot(message_indices(s, net.cfg.messages), net.cfg.messages));
    const auto fwd = run_direction(tape, net.tx_forward, inputs, init_forward, false);
    const auto bwd = run_direction(tape, net.tx_backward, inputs, init_backward, true);
    TxOutput out;
    out.blocks.reserve(slots.size());
    for (std::size_t t = 0; t < slots.size(); ++t) out.blocks.push_back(nn::scale(tape, nn::add(tape, fwd[t], bwd[t]), 0.5));
    out.forward_final = fwd.back();
    out.backward_final = bwd.front();
    return out;
}

/// p_t = softmax(W_s [h_fwd; h_bwd] + b_s).
inline nn::Var rx_readout(nn::Tape& tape, const BoundTransceiver& net, nn::Var forward, nn::Var backward)
{
    const std::size_t s = net.cfg.rx_state();
    return nn::softmax(tape, nn::affine(tape, {nn::Segment::of(forward, s), nn::Segment::of(backward, s)},
                                        net.readout_weight, net.readout_bias));
}

struct RxOutput {
    std::vector<nn::Var> probs;
    std::vector<nn::Var> forward;
    std::vector<nn::Var> backward;
};

/// Receiver BRNN over received blocks (rows = batch, cols = n).
inline RxOutput rx_decode(nn::Tape& tape, const BoundTransceiver& net, const std::vector<nn::Var>& blocks,
                          nn::Var init_forward, nn::Var init_backward)
{
    if (blocks.empty()) throw std::invalid_argument("rx_decode: empty sequence");
    std::vector<nn::Segment> inputs;
    inputs.reserve(blocks.size());
    for (nn::Var b : blocks) {
        if (tape.value(b).cols() != net.cfg.block) throw std::invalid_argument("rx_decode: block length mismatch");
        inputs.push_back(nn::Segment::of(b, net.cfg.block));
    }
    RxOutput out;
    out.forward = run_direction(tape, net.rx_forward, inputs, init_forward, false);
    out.backward = run_direction(tape, net.rx_backward, inputs, init_backward, true);
    out.probs.reserve(blocks.size());
    for (std::size_t t = 0; t < blocks.size(); ++t)
        out.probs.push_back(rx_readout(tape, net, out.forward[t], out.backward[t]));
    return out;
}

} // namespace sbrnn::model
