#include "ppt/adam.hpp"

#include <cmath>

namespace ppt {

AdamState::AdamState(std::span<const Tensor> params, AdamConfig config)
    : config_(config) {
    if (!(config.lr > 0.0) || !(config.epsilon > 0.0) ||
        config.beta1 < 0.0 || config.beta1 >= 1.0 ||
        config.beta2 < 0.0 || config.beta2 >= 1.0) {
        throw ConfigError("adam: need lr > 0, epsilon > 0 and betas in [0, 1)");
    }
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor& p : params) {
        size_t n = static_cast<size_t>(p.size());
        m_.emplace_back(n, 0.0f);
        v_.emplace_back(n, 0.0f);
    }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
    if (params.size() != state.m_.size()) {
        throw ContractError("adam_step: state holds " + std::to_string(state.m_.size()) +
                            " parameters, got " + std::to_string(params.size()));
    }
    ++state.steps_;
    const AdamConfig& c = state.config_;
    double corr1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.steps_));
    double corr2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.steps_));

    for (size_t i = 0; i < params.size(); ++i) {
        auto data = params[i].mutable_data();
        if (data.size() != state.m_[i].size()) {
            throw ContractError("adam_step: parameter " + std::to_string(i) +
                                " changed size since the state was built");
        }
        auto g = params[i].grad();
        float* m = state.m_[i].data();
        float* v = state.v_[i].data();
        for (size_t j = 0; j < data.size(); ++j) {
            double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
            double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
            double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            double step = c.lr * (mj / corr1) / (std::sqrt(vj / corr2) + c.epsilon);
            data[j] = static_cast<float>(data[j] - step);
        }
    }
}

}  // namespace ppt
