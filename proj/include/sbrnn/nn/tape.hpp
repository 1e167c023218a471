#pragma once

#include "sbrnn/nn/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace sbrnn::nn {

/// Handle to a value recorded on a Tape.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;
    [[nodiscard]] bool valid() const { return id != npos; }
};

/// Reverse-mode recording of a single forward pass.
///
/// Nodes are append-only; a node's backward closure reads its own gradient and
/// accumulates into the gradients of its inputs. Parameter leaves write
/// straight into Parameter::grad. A tape is single-writer.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Var constant(Tensor value)
    {
        Node& n = nodes_.emplace_back();
        n.owned = std::move(value);
        return {nodes_.size() - 1};
    }

    /// Leaf bound to an externally owned parameter; the parameter must outlive
    /// the tape.
    Var parameter(Parameter& p)
    {
        if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), 0.0);
        Node& n = nodes_.emplace_back();
        n.external = &p.value;
        n.external_grad = p.grad.data();
        n.requires_grad = true;
        return {nodes_.size() - 1};
    }

    /// Records an op result. `backward` is dropped when no input needs a
    /// gradient.
    Var push(Tensor value, bool requires_grad, Backward backward)
    {
        Node& n = nodes_.emplace_back();
        n.owned = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad) n.backward = std::move(backward);
        return {nodes_.size() - 1};
    }

    [[nodiscard]] const Tensor& value(Var v) const { return node(v.id).get(); }
    [[nodiscard]] bool requires_grad(Var v) const { return node(v.id).requires_grad; }

    /// Gradient buffer of `v`, allocated (zeroed) on first access.
    std::span<double> grad(Var v) { return grad(v.id); }

    std::span<double> grad(std::size_t id)
    {
        Node& n = node(id);
        const std::size_t len = n.get().size();
        if (n.external_grad) return {n.external_grad, len};
        if (n.grad.size() != len) n.grad.assign(len, 0.0);
        return n.grad;
    }

    [[nodiscard]] bool has_grad(std::size_t id) const
    {
        const Node& n = node(id);
        return n.external_grad != nullptr || !n.grad.empty();
    }

    /// Backpropagates from a scalar node.
    void backward(Var loss)
    {
        if (value(loss).size() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
        if (!requires_grad(loss)) return;
        grad(loss)[0] += 1.0;
        for (std::size_t id = loss.id + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (n.backward && has_grad(id)) n.backward(*this, id);
        }
    }

    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    void clear()
    {
        nodes_.clear();
        signature_ = kSignatureSeed;
    }

    /// Order-sensitive hash of the linear pieces selected by every piecewise
    /// activation so far; finite-difference checks compare it across
    /// perturbations to skip probes that straddle a kink.
    [[nodiscard]] std::uint64_t activation_signature() const { return signature_; }

    void note_region(unsigned piece)
    {
        signature_ ^= piece + 1;
        signature_ *= 1099511628211ULL;
    }

private:
    static constexpr std::uint64_t kSignatureSeed = 1469598103934665603ULL;

    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        Buffer grad;
        double* external_grad = nullptr;
        bool requires_grad = false;
        Backward backward;

        [[nodiscard]] const Tensor& get() const { return external ? *external : owned; }
    };

    Node& node(std::size_t id)
    {
        if (id >= nodes_.size()) throw std::out_of_range("Tape: invalid Var");
        return nodes_[id];
    }
    [[nodiscard]] const Node& node(std::size_t id) const
    {
        if (id >= nodes_.size()) throw std::out_of_range("Tape: invalid Var");
        return nodes_[id];
    }

    std::deque<Node> nodes_;
    std::uint64_t signature_ = kSignatureSeed;
};

} // namespace sbrnn::nn
