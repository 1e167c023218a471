#pragma once

#include "sbrnn/nn/params.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sbrnn::nn {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam with per-parameter moment accumulators.
class Adam {
public:
    explicit Adam(AdamOptions options = {}) : options_(options) {}

    [[nodiscard]] const AdamOptions& options() const { return options_; }
    [[nodiscard]] long step_count() const { return step_; }

    void step(ParamSet& params)
    {
        if (first_moment_.empty()) {
            for (const auto& p : params) {
                first_moment_.emplace_back(p.value.size(), 0.0);
                second_moment_.emplace_back(p.value.size(), 0.0);
            }
        }
        if (first_moment_.size() != params.size()) throw std::invalid_argument("Adam: parameter set changed");

        ++step_;
        const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
        std::size_t k = 0;
        for (auto& p : params) {
            auto& m = first_moment_[k];
            auto& v = second_moment_[k];
            ++k;
            if (m.size() != p.value.size() || p.grad.size() != p.value.size())
                throw std::invalid_argument("Adam: shape mismatch for " + p.name);
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double g = p.grad[i];
                if (!std::isfinite(g)) throw std::domain_error("Adam: non-finite gradient in " + p.name);
                m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
                v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
                const double m_hat = m[i] / c1;
                const double v_hat = v[i] / c2;
                p.value[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
            }
        }
    }

private:
    AdamOptions options_;
    long step_ = 0;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
};

} // namespace sbrnn::nn
