#pragma once

#include "sbrnn/baselines/ffnn_autoencoder.hpp"
#include "sbrnn/baselines/pam2.hpp"
#include "sbrnn/channel/channel.hpp"
#include "sbrnn/estimation/metrics.hpp"
#include "sbrnn/estimation/sliding.hpp"
#include "sbrnn/harness/config.hpp"
#include "sbrnn/harness/rng.hpp"
#include "sbrnn/model/transceiver.hpp"
#include "sbrnn/nn/checkpoint.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace sbrnn::harness {

/// Messages of one optimization step: slots[t][i] is message t of batch
/// sequence i.
using Slots = std::vector<std::vector<std::uint32_t>>;

/// Per-sequence MT19937 message streams for training; windows are drawn on
/// demand instead of materializing the sequences.
class TrainingSource {
public:
    static constexpr std::uint32_t kPurpose = 0x7472616eu;

    TrainingSource(std::size_t batch, std::uint64_t seed)
    {
        streams_.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i)
            streams_.push_back(MessageStream::mersenne(substream_seed(seed, i, kPurpose)));
    }

    Slots next_windows(std::size_t window, std::uint32_t alphabet)
    {
        Slots slots(window, std::vector<std::uint32_t>(streams_.size()));
        for (std::size_t i = 0; i < streams_.size(); ++i)
            for (std::size_t t = 0; t < window; ++t) slots[t][i] = streams_[i].next_message(alphabet);
        return slots;
    }

private:
    std::vector<MessageStream> streams_;
};

struct StepContext {
    std::shared_ptr<const channel::ImddChannel> link;
    channel::NoiseDraw draw;
    bool single_series = true;
    std::uint64_t step = 0;
};

/// Places batch row i, slot t at block i*W + t of one long series, sends it
/// through the channel, and splits the result back into slots. With
/// single_series off every batch row gets its own channel pass.
inline std::vector<nn::Var> through_channel(nn::Tape& tape, const std::vector<nn::Var>& slots, const StepContext& ctx)
{
    const std::size_t window = slots.size();
    const std::size_t batch = tape.value(slots.at(0)).rows();
    const std::size_t n = tape.value(slots[0]).cols();
    std::vector<nn::Var> out(window);
    if (ctx.single_series) {
        std::vector<std::vector<std::size_t>> placement(window, std::vector<std::size_t>(batch));
        for (std::size_t t = 0; t < window; ++t)
            for (std::size_t i = 0; i < batch; ++i) placement[t][i] = i * window + t;
        const nn::Var series = nn::scatter_blocks(tape, slots, placement, batch * window);
        const nn::Var received = channel::transmit(tape, series, ctx.link, ctx.draw);
        for (std::size_t t = 0; t < window; ++t) out[t] = nn::gather_blocks(tape, received, placement[t], n);
        return out;
    }
    std::vector<nn::Var> received(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        std::vector<nn::Var> rows(window);
        for (std::size_t t = 0; t < window; ++t) rows[t] = nn::gather_rows(tape, slots[t], {i});
        const auto draw = channel::NoiseDraw::derive(ctx.draw.dac_seed, i);
        received[i] = channel::transmit(tape, nn::concat_rows(tape, rows), ctx.link, draw);
    }
    for (std::size_t t = 0; t < window; ++t) {
        std::vector<nn::Var> rows(batch);
        for (std::size_t i = 0; i < batch; ++i) rows[i] = nn::gather_rows(tape, received[i], {t});
        out[t] = nn::concat_rows(tape, rows);
    }
    return out;
}

inline nn::Var mean_cross_entropy(nn::Tape& tape, const std::vector<nn::Var>& probs, const Slots& slots)
{
    std::vector<nn::Var> terms;
    terms.reserve(probs.size());
    for (std::size_t t = 0; t < probs.size(); ++t) {
        std::vector<std::size_t> targets(slots[t].size());
        for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = slots[t][i] - 1;
        terms.push_back(nn::cross_entropy(tape, probs[t], std::move(targets)));
    }
    return nn::scale(tape, nn::add_scalars(tape, terms), 1.0 / static_cast<double>(probs.size()));
}

/// A trainable transmission system as seen by the training and evaluation
/// loops.
class System {
public:
    explicit System(SystemSpec spec, std::size_t block) : spec_(spec), block_(block) {}
    virtual ~System() = default;

    [[nodiscard]] const SystemSpec& spec() const { return spec_; }
    [[nodiscard]] std::size_t block() const { return block_; }

    /// Estimation carry rule; takes effect for the next window evaluated.
    void set_carry_rule(estimation::CarryRule rule) { spec_.carry = rule; }

    virtual nn::ParamSet& params() = 0;
    [[nodiscard]] virtual std::size_t node_count() const = 0;

    /// Clears any state carried between optimization steps.
    virtual void reset_state() {}

    /// Mean cross entropy of one optimization step.
    virtual nn::Var training_loss(nn::Tape& tape, const Slots& slots, const StepContext& ctx) = 0;

    /// Transmits one test sequence and counts errors over the estimated
    /// messages.
    virtual estimation::ErrorReport evaluate_sequence(const model::MessageSequence& messages,
                                                      const channel::ImddChannel& link,
                                                      const channel::NoiseDraw& draw, std::size_t window) = 0;

    [[nodiscard]] std::map<std::string, std::string> metadata() const
    {
        return {
            {"system", to_string(spec_.kind)},
            {"M", std::to_string(spec_.messages)},
            {"n", std::to_string(block_)},
            {"rate_gbps", detail::format_value(spec_.rate_gbps)},
            {"carry_rule", estimation::to_string(spec_.carry)},
            {"pam2_window_Z", std::to_string(spec_.pam2_window)},
            {"pam2_layers_L", std::to_string(spec_.pam2_layers)},
            {"pam2_rolloff", detail::format_value(spec_.pam2_rolloff)},
            {"init", "glorot-uniform +-sqrt(6/(fan_in+fan_out)), zero bias"},
        };
    }

    [[nodiscard]] nn::Checkpoint checkpoint(std::map<std::string, std::string> extra = {})
    {
        auto meta = metadata();
        meta.merge(extra);
        return nn::Checkpoint::from(params(), std::move(meta));
    }

private:
    SystemSpec spec_;
    std::size_t block_;
};

/// Bidirectional recurrent autoencoder with sliding-window estimation.
class SbrnnSystem final : public System {
public:
    SbrnnSystem(SystemSpec spec, std::size_t block, std::size_t train_window, std::uint64_t seed)
        : System(spec, block),
          net_({spec.messages, block,
                spec.kind == SystemKind::lstm_gru ? model::CellKind::lstm_gru : model::CellKind::vanilla,
                train_window},
               seed)
    {}

    model::Transceiver& transceiver() { return net_; }
    nn::ParamSet& params() override { return net_.params(); }
    [[nodiscard]] std::size_t node_count() const override { return model::param_count(net_.config()); }

    void reset_state() override { carried_ = {}; }

    nn::Var training_loss(nn::Tape& tape, const Slots& slots, const StepContext& ctx) override
    {
        const std::size_t batch = slots.at(0).size();
        const auto& cfg = net_.config();
        if (carried_.tx_forward.rows() != batch || carried_.tx_forward.cols() != cfg.tx_state()) {
            carried_.tx_forward = carried_.tx_backward = nn::Tensor::matrix(batch, cfg.tx_state());
            carried_.rx_forward = carried_.rx_backward = nn::Tensor::matrix(batch, cfg.rx_state());
        }
        const auto rule = spec().carry;
        auto initial = [&](const nn::Tensor& carried, bool use) {
            return tape.constant(use ? carried : nn::Tensor::matrix(carried.rows(), carried.cols()));
        };
        const bool carry_f = rule != estimation::CarryRule::none;
        const bool carry_b = rule == estimation::CarryRule::both;

        auto bound = net_.bind(tape);
        const auto tx = model::tx_encode(tape, bound, slots, initial(carried_.tx_forward, carry_f),
                                         initial(carried_.tx_backward, carry_b));
        const auto received = through_channel(tape, tx.blocks, ctx);
        const auto rx = model::rx_decode(tape, bound, received, initial(carried_.rx_forward, carry_f),
                                         initial(carried_.rx_backward, carry_b));

        // Detached hand-off to the next window of each sequence.
        carried_.tx_forward = tape.value(tx.forward_final);
        carried_.tx_backward = tape.value(tx.backward_final);
        carried_.rx_forward = tape.value(rx.forward.back());
        carried_.rx_backward = tape.value(rx.backward.front());
        return mean_cross_entropy(tape, rx.probs, slots);
    }

    /// Encodes the whole sequence in one pass, receives it, and runs the
    /// sliding-window estimator over it.
    nn::Tensor receive(const model::MessageSequence& messages, const channel::ImddChannel& link,
                       const channel::NoiseDraw& draw)
    {
        nn::Tape tape;
        auto bound = net_.bind(tape);
        Slots slots(messages.size(), std::vector<std::uint32_t>(1));
        for (std::size_t t = 0; t < messages.size(); ++t) slots[t][0] = messages[t];
        const auto& cfg = net_.config();
        const auto tx = model::tx_encode(tape, bound, slots, tape.constant(nn::Tensor::matrix(1, cfg.tx_state())),
                                         tape.constant(nn::Tensor::matrix(1, cfg.tx_state())));
        const nn::Var series = nn::concat_rows(tape, tx.blocks);
        nn::Tensor received(tape.value(series).shape, link.forward(tape.value(series).values, draw));
        return received;
    }

    estimation::ErrorReport evaluate_sequence(const model::MessageSequence& messages, const channel::ImddChannel& link,
                                              const channel::NoiseDraw& draw, std::size_t window) override
    {
        if (window > messages.size()) throw std::invalid_argument("evaluate: W larger than the sequence");
        const nn::Tensor received = receive(messages, link, draw);
        const auto fused = estimation::sliding_estimate(net_, received, window, spec().carry);
        const auto decisions = estimation::decide_all(fused);
        return estimation::count_errors(std::span(messages).first(decisions.size()), decisions, spec().messages);
    }

private:
    struct Carried {
        nn::Tensor tx_forward, tx_backward, rx_forward, rx_backward;
    };

    model::Transceiver net_;
    Carried carried_;
};

/// Block-wise feed-forward autoencoder (no inter-block processing).
class FfnnSystem final : public System {
public:
    FfnnSystem(SystemSpec spec, std::size_t block, std::uint64_t seed)
        : System(spec, block), net_(spec.messages, block, seed)
    {}

    baselines::FfnnAutoencoder& autoencoder() { return net_; }
    nn::ParamSet& params() override { return net_.params(); }
    [[nodiscard]] std::size_t node_count() const override
    {
        return baselines::ffnn_param_count(spec().messages, block());
    }

    nn::Var training_loss(nn::Tape& tape, const Slots& slots, const StepContext& ctx) override
    {
        std::vector<nn::Var> blocks;
        for (const auto& s : slots) blocks.push_back(net_.encode(tape, s));
        const auto received = through_channel(tape, blocks, ctx);
        std::vector<nn::Var> probs;
        for (nn::Var r : received) probs.push_back(net_.decode(tape, r));
        return mean_cross_entropy(tape, probs, slots);
    }

    estimation::ErrorReport evaluate_sequence(const model::MessageSequence& messages, const channel::ImddChannel& link,
                                              const channel::NoiseDraw& draw, std::size_t) override
    {
        nn::Tape tape;
        const nn::Var tx = net_.encode(tape, messages);
        const nn::Var rx = tape.constant(nn::Tensor(tape.value(tx).shape, link.forward(tape.value(tx).values, draw)));
        const nn::Tensor& probs = tape.value(net_.decode(tape, rx));
        std::vector<std::uint32_t> decisions(messages.size());
        for (std::size_t i = 0; i < decisions.size(); ++i) decisions[i] = estimation::decide(probs.row(i));
        return estimation::count_errors(messages, decisions, spec().messages);
    }

private:
    baselines::FfnnAutoencoder net_;
};

/// Gray-mapped bits of a message sequence, most significant bit first.
inline std::vector<std::uint8_t> message_bits(std::span<const std::uint32_t> messages, std::size_t alphabet)
{
    const unsigned k = estimation::bits_per_message(alphabet);
    std::vector<std::uint8_t> bits;
    bits.reserve(messages.size() * k);
    for (std::uint32_t m : messages) {
        const std::uint32_t g = estimation::gray_index(m, alphabet);
        for (unsigned b = 0; b < k; ++b) bits.push_back(static_cast<std::uint8_t>(g >> (k - 1 - b) & 1u));
    }
    return bits;
}

/// PAM2 transmitter with the multi-symbol feed-forward receiver. Messages
/// are carried as their Gray bits, one bit per symbol.
class Pam2System final : public System {
public:
    Pam2System(SystemSpec spec, std::size_t block, std::size_t samples_per_symbol, std::uint64_t seed)
        : System(spec, block),
          rx_({samples_per_symbol, spec.pam2_rolloff, spec.pam2_window, spec.pam2_layers}, seed)
    {}

    baselines::Pam2Receiver& receiver() { return rx_; }
    nn::ParamSet& params() override { return rx_.params(); }
    [[nodiscard]] std::size_t node_count() const override { return baselines::pam2_param_count(rx_.config()); }

    nn::Var training_loss(nn::Tape& tape, const Slots& slots, const StepContext& ctx) override
    {
        std::vector<std::uint32_t> messages;
        for (std::size_t i = 0; i < slots[0].size(); ++i)
            for (const auto& s : slots) messages.push_back(s[i]);
        const auto bits = message_bits(messages, spec().messages);
        const auto& cfg = rx_.config();
        const std::size_t half = (cfg.window - 1) / 2;
        if (bits.size() < cfg.window) throw std::invalid_argument("pam2: batch shorter than the receiver window");
        const nn::Var wave = tape.constant(nn::Tensor({1, bits.size() * cfg.samples_per_symbol},
                                                      baselines::pam2_modulate(bits, cfg)));
        const nn::Var received = channel::transmit(tape, wave, ctx.link, ctx.draw);

        // One label per batch message, spread evenly over the estimable symbols.
        const std::size_t estimable = bits.size() - cfg.window + 1;
        const std::size_t labels = std::min(estimable, messages.size());
        std::vector<std::size_t> starts(labels);
        std::vector<std::size_t> targets(labels);
        for (std::size_t r = 0; r < labels; ++r) {
            const std::size_t center = half + r * estimable / labels;
            starts[r] = (center - half) * cfg.samples_per_symbol;
            targets[r] = bits[center];
        }
        const nn::Var probs = rx_.forward(tape, nn::gather_windows(tape, received, std::move(starts), cfg.input_width()));
        return nn::cross_entropy(tape, probs, std::move(targets));
    }

    estimation::ErrorReport evaluate_sequence(const model::MessageSequence& messages, const channel::ImddChannel& link,
                                              const channel::NoiseDraw& draw, std::size_t) override
    {
        const auto& cfg = rx_.config();
        const auto bits = message_bits(messages, spec().messages);
        const auto wave = baselines::pam2_modulate(bits, cfg);
        const auto received = link.forward(wave, draw);
        const nn::Tensor probs = baselines::rx_ffnn_equalize(rx_, received, bits.size());

        const std::size_t half = (cfg.window - 1) / 2;
        const unsigned k = estimation::bits_per_message(spec().messages);
        estimation::ErrorReport r;
        std::vector<char> wrong(bits.size(), 0);
        for (std::size_t row = 0; row < probs.rows(); ++row) {
            const std::size_t sym = row + half;
            const std::uint8_t decision = probs(row, 1) > probs(row, 0) ? 1 : 0;
            wrong[sym] = decision != bits[sym];
            r.bit_errors += static_cast<std::uint64_t>(wrong[sym]);
        }
        r.bits = probs.rows();
        const std::size_t first_msg = (half + k - 1) / k;
        const std::size_t end_msg = (half + probs.rows()) / k;
        for (std::size_t m = first_msg; m < end_msg; ++m) {
            bool err = false;
            for (unsigned b = 0; b < k; ++b) err = err || wrong[m * k + b];
            r.block_errors += err;
        }
        r.messages = end_msg > first_msg ? end_msg - first_msg : 0;
        r.ber = static_cast<double>(r.bit_errors) / static_cast<double>(r.bits);
        r.bler = r.messages ? static_cast<double>(r.block_errors) / static_cast<double>(r.messages) : 0.0;
        return r;
    }

private:
    baselines::Pam2Receiver rx_;
};

inline std::unique_ptr<System> make_system(const SystemSpec& spec, const channel::ChannelConfig& ch,
                                           std::size_t train_window, std::uint64_t seed)
{
    const std::size_t block = spec.block_length(ch);
    switch (spec.kind) {
    case SystemKind::vanilla:
    case SystemKind::lstm_gru: return std::make_unique<SbrnnSystem>(spec, block, train_window, seed);
    case SystemKind::ffnn: return std::make_unique<FfnnSystem>(spec, block, seed);
    case SystemKind::pam2_ffnn:
        return std::make_unique<Pam2System>(spec, block, spec.samples_per_symbol(ch), seed);
    }
    throw std::logic_error("make_system: unknown kind");
}

/// Rebuilds a system from checkpoint metadata and loads its parameters.
inline std::unique_ptr<System> system_from_checkpoint(const nn::Checkpoint& ckpt, const channel::ChannelConfig& ch)
{
    SystemSpec spec;
    spec.kind = parse_system_kind(ckpt.meta("system"));
    spec.messages = std::stoul(ckpt.meta("M"));
    spec.block = std::stoul(ckpt.meta("n"));
    spec.rate_gbps = std::stod(ckpt.meta("rate_gbps"));
    spec.carry = estimation::parse_carry_rule(ckpt.meta("carry_rule"));
    spec.pam2_window = std::stoul(ckpt.meta("pam2_window_Z"));
    spec.pam2_layers = std::stoul(ckpt.meta("pam2_layers_L"));
    spec.pam2_rolloff = std::stod(ckpt.meta("pam2_rolloff"));
    const std::size_t window = ckpt.metadata.count("train_window") ? std::stoul(ckpt.meta("train_window")) : 10;
    std::unique_ptr<System> sys;
    if (spec.kind == SystemKind::pam2_ffnn)
        sys = std::make_unique<Pam2System>(spec, spec.block, spec.block / spec.bits_per_message(), 0);
    else
        sys = make_system(spec, ch, window, 0);
    ckpt.load_into(sys->params());
    return sys;
}

} // namespace sbrnn::harness
