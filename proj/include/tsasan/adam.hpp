// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tsasan/tensor.hpp"

namespace tsasan {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One state object per parameter set; step_count is shared so the bias
// correction uses the same t for every parameter.
struct AdamState {
    long step_count = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    AdamConfig config;
};

// Standard Adam update with bias correction, applied in place to every
// parameter's values from its accumulated gradient. Throws TrainingError
// naming the parameter if a gradient is non-finite.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr);

}  // namespace tsasan
