#pragma once

#include "sbrnn/model/transceiver.hpp"
#include "sbrnn/nn/ops.hpp"
#include "sbrnn/nn/params.hpp"

#include <random>
#include <vector>

namespace sbrnn::baselines {

/// Block-wise autoencoder: each message is mapped to n samples and decoded
/// from those n samples alone. Transmitter M -> 2M -> 2M -> n, receiver
/// n -> 2M -> 2M -> M.
inline std::vector<nn::DenseLayer> ffnn_layers(std::size_t messages, std::size_t block)
{
    const std::size_t m = messages;
    return {
        {"tx.l1", m, 2 * m, nn::Activation::relu, {}},
        {"tx.l2", 2 * m, 2 * m, nn::Activation::relu, {}},
        {"tx.l3", 2 * m, block, nn::Activation::clip_tx, {}},
        {"rx.l1", block, 2 * m, nn::Activation::relu, {}},
        {"rx.l2", 2 * m, 2 * m, nn::Activation::relu, {}},
        {"rx.l3", 2 * m, m, nn::Activation::softmax, {}},
    };
}

/// Nodes counted per network, input layer included: 10M + 2n.
inline std::size_t ffnn_param_count(std::size_t messages, std::size_t block)
{
    const auto layers = ffnn_layers(messages, block);
    model::NetworkWidths tx{layers[0].in}, rx{layers[3].in};
    for (std::size_t i = 0; i < 3; ++i) tx.push_back(layers[i].out);
    for (std::size_t i = 3; i < 6; ++i) rx.push_back(layers[i].out);
    return model::node_count({tx, rx});
}

class FfnnAutoencoder {
public:
    FfnnAutoencoder(std::size_t messages, std::size_t block, std::uint64_t seed)
        : messages_(messages), block_(block), layers_(ffnn_layers(messages, block))
    {
        std::mt19937_64 rng(seed);
        for (const auto& l : layers_) nn::add_dense(params_, l, rng);
    }

    [[nodiscard]] std::size_t messages() const { return messages_; }
    [[nodiscard]] std::size_t block() const { return block_; }
    nn::ParamSet& params() { return params_; }
    [[nodiscard]] const nn::ParamSet& params() const { return params_; }

    /// One block per message, rows in input order; values in [0, pi/4].
    nn::Var encode(nn::Tape& tape, std::span<const std::uint32_t> messages)
    {
        nn::Var h = layer(tape, 0, {nn::Segment::onehot(model::message_indices(messages, messages_), messages_)});
        h = layer(tape, 1, {nn::Segment::of(h, layers_[1].in)});
        return layer(tape, 2, {nn::Segment::of(h, layers_[2].in)});
    }

    /// Posterior per received block (rows).
    nn::Var decode(nn::Tape& tape, nn::Var blocks)
    {
        nn::Var h = layer(tape, 3, {nn::Segment::of(blocks, block_)});
        h = layer(tape, 4, {nn::Segment::of(h, layers_[4].in)});
        return layer(tape, 5, {nn::Segment::of(h, layers_[5].in)});
    }

private:
    nn::Var layer(nn::Tape& tape, std::size_t i, std::vector<nn::Segment> input)
    {
        const auto& l = layers_[i];
        const nn::Var pre = nn::affine(tape, std::move(input), tape.parameter(params_.at(l.weight_name())),
                                       tape.parameter(params_.at(l.bias_name())));
        return model::activate(tape, pre, l.activation);
    }

    std::size_t messages_;
    std::size_t block_;
    std::vector<nn::DenseLayer> layers_;
    nn::ParamSet params_;
};

} // namespace sbrnn::baselines
