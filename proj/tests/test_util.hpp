// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tsasan/network.hpp"

namespace tsasan::testutil {

// Central-difference check of one named model parameter against the
// reverse-mode gradient of an arbitrary scalar loss. Returns the worst
// unit-floored relative error.
inline double model_param_fd(TsaSan& model, const std::string& name,
                             const std::function<Tensor()>& loss_fn, double h) {
    model.zero_grad();
    loss_fn().backward();
    const std::vector<double> analytic = model.param(name).grad();
    const std::vector<double> original = model.param(name).value();

    double worst = 0.0;
    {
        NoGradGuard ng;
        std::vector<double> vals = original;
        for (size_t i = 0; i < original.size(); ++i) {
            vals[i] = original[i] + h;
            model.set_param(name, vals);
            const double fp = loss_fn().item();
            vals[i] = original[i] - h;
            model.set_param(name, vals);
            const double fm = loss_fn().item();
            vals[i] = original[i];
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(fd)});
            worst = std::max(worst, std::fabs(analytic[i] - fd) / denom);
        }
        model.set_param(name, original);
    }
    return worst;
}

}  // namespace tsasan::testutil
