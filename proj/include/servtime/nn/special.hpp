#pragma once

#include "servtime/types.hpp"

namespace servtime::nn {

// Numerically stable softplus, log(1 + e^x).
Scalar softplus(Scalar x);
Scalar sigmoid(Scalar x);

// d/dx lgamma(x), x > 0.
Scalar digamma(Scalar x);

// Regularized upper incomplete gamma Q(a, x), a > 0, x >= 0, in log space.
Scalar log_gamma_q(Scalar a, Scalar x);

// log of the standard normal survival function, log(P[Z > z]).
Scalar log_normal_sf(Scalar z);

// Scaled complementary error function e^{x^2} erfc(x) for x >= 0.
Scalar erfcx(Scalar x);

}  // namespace servtime::nn
