#pragma once

#include <optional>

#include "servtime/nn/tape.hpp"
#include "servtime/types.hpp"

namespace servtime::rpp {

// Intensity head lambda(tau) = exp(alpha + w tau) after the last event.
// alpha = v . h + b is precomputed by the caller; the closed forms below
// depend on (alpha, w) only. Near w = 0 every form switches to its series
// limit, which recovers a constant-intensity exponential law.
struct ExpHead {
  Scalar alpha = 0.0;
  Scalar w = 0.0;
};

inline constexpr Scalar kSmallW = 1e-6;

// lambda(a_j + dt); dt >= 0.
Scalar intensity(const ExpHead& head, Scalar dt);

// log f*(delta) = log lambda(delta) - e^alpha (e^{w delta} - 1)/w.
Scalar log_f_star(const ExpHead& head, Scalar delta);

// G(tau) = exp(-e^alpha (e^{w tau} - 1)/w); G(0) = 1, nonincreasing.
Scalar survival(const ExpHead& head, Scalar tau);

// Residual mass never arriving: G(inf) > 0 iff w < 0.
Scalar survival_at_inf(const ExpHead& head);

struct ExpectedNext {
  Scalar value = 0.0;
  bool defective = false;
};

// Integral of G; when w < 0 the distribution is defective and the value is
// the expectation conditional on an arrival before `horizon`.
ExpectedNext expected_next(const ExpHead& head, Scalar horizon = 1e6,
                           Scalar tol = 1e-9);

// Inverse transform: tau with F(tau) = y; nullopt = NO_ARRIVAL for the
// defective case when y exceeds the total mass F(inf).
std::optional<Scalar> inverse_cdf_sample(const ExpHead& head, Scalar y);

// Tape version of log f* for training: alpha, w are scalar nodes, delta a
// constant. Matches log_f_star on values.
nn::ValueRef log_f_star_node(nn::Tape& t, nn::ValueRef alpha, nn::ValueRef w,
                             Scalar delta);

}  // namespace servtime::rpp
