// SPDX-License-Identifier: Apache-2.0
#include "tsasan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tsasan {

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double h) {
    if (!(h > 0.0)) throw ConfigError("finite_difference_check: h must be positive");

    Tensor probe = x.detach(true);
    Tensor y = f(probe);
    if (y.numel() != 1) {
        throw ShapeError("finite_difference_check: f must return a scalar, got " +
                         shape_str(y.shape()));
    }
    y.backward();
    std::vector<double> analytic = probe.grad();

    double worst = 0.0;
    {
        NoGradGuard ng;
        Tensor plain = x.detach(false);
        auto& vals = plain.value();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + h;
            const double fp = f(plain).item();
            vals[i] = saved - h;
            const double fm = f(plain).item();
            vals[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = analytic[i];
            const double denom = std::max({1.0, std::fabs(ad), std::fabs(fd)});
            worst = std::max(worst, std::fabs(ad - fd) / denom);
        }
    }
    return worst;
}

}  // namespace tsasan
