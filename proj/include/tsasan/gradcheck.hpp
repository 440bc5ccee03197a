// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "tsasan/tensor.hpp"

namespace tsasan {

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences (f(x+h) - f(x-h)) / 2h, element by element.
// Returns the worst unit-floored relative error
//   |ad - fd| / max(1, |ad|, |fd|)
// so near-zero gradients are judged on absolute error.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double h);

}  // namespace tsasan
