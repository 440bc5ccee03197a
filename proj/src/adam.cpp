// SPDX-License-Identifier: Apache-2.0
#include "tsasan/adam.hpp"

#include <cmath>

namespace tsasan {

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr) {
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i].second.numel(), 0.0);
            state.second_moment[i].assign(params[i].second.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw TrainingError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                            " parameters, got " + std::to_string(params.size()));
    }
    state.step_count += 1;
    const auto& cfg = state.config;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& [name, p] = params[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != p.numel()) {
            throw TrainingError("adam_step: moment size mismatch for parameter '" + name + "'");
        }
        const auto& g = p.grad();
        auto& val = p.value();
        for (size_t j = 0; j < val.size(); ++j) {
            if (!std::isfinite(g[j])) {
                throw TrainingError("adam_step: non-finite gradient in parameter '" + name + "'");
            }
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            val[j] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

}  // namespace tsasan
