#pragma once

#include "sbrnn/nn/tensor.hpp"

#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>
#include <string>

namespace sbrnn::nn {

/// Named, ordered collection of trainable tensors. Storage is stable so a
/// Tape may hold pointers into it while parameters are added.
class ParamSet {
public:
    Parameter& add(std::string name, Tensor value)
    {
        if (find(name)) throw std::invalid_argument("ParamSet: duplicate parameter " + name);
        return params_.emplace_back(std::move(name), std::move(value));
    }

    [[nodiscard]] Parameter* find(const std::string& name)
    {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }
    [[nodiscard]] const Parameter* find(const std::string& name) const
    {
        for (const auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    Parameter& at(const std::string& name)
    {
        if (auto* p = find(name)) return *p;
        throw std::out_of_range("ParamSet: no parameter " + name);
    }
    [[nodiscard]] const Parameter& at(const std::string& name) const
    {
        if (const auto* p = find(name)) return *p;
        throw std::out_of_range("ParamSet: no parameter " + name);
    }

    void zero_grad()
    {
        for (auto& p : params_) p.zero_grad();
    }

    [[nodiscard]] std::size_t size() const { return params_.size(); }
    [[nodiscard]] std::size_t scalar_count() const
    {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    [[nodiscard]] auto begin() const { return params_.begin(); }
    [[nodiscard]] auto end() const { return params_.end(); }

private:
    std::deque<Parameter> params_;
};

enum class Activation { identity, relu, clip_tx, sigmoid, softmax };

/// Shape and activation of a fully connected layer; its parameters live in a
/// ParamSet as `<name>.W<suffix>` (out x in) and `<name>.b<suffix>` (out).
struct DenseLayer {
    std::string name;
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::identity;
    std::string suffix; // appended to "W"/"b", e.g. "1" for "txf.W1"

    [[nodiscard]] std::string weight_name() const { return name + ".W" + suffix; }
    [[nodiscard]] std::string bias_name() const { return name + ".b" + suffix; }
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
inline void add_dense(ParamSet& params, const DenseLayer& layer, std::mt19937_64& rng)
{
    if (layer.in == 0 || layer.out == 0) throw std::invalid_argument("add_dense: empty layer " + layer.name);
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor w = Tensor::matrix(layer.out, layer.in);
    for (double& v : w.values) v = dist(rng);
    params.add(layer.weight_name(), std::move(w));
    params.add(layer.bias_name(), Tensor::vector(layer.out));
}

} // namespace sbrnn::nn
