#pragma once

#include <functional>

#include "servtime/types.hpp"

namespace servtime {

// Adaptive Simpson on [a, b] with absolute tolerance.
Scalar adaptive_simpson(const std::function<Scalar(Scalar)>& f, Scalar a,
                        Scalar b, Scalar tol = 1e-9, int max_depth = 40);

}  // namespace servtime
