#include "servtime/nn/special.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace servtime::nn {

Scalar softplus(Scalar x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

Scalar sigmoid(Scalar x) {
  if (x >= 0.0) {
    const Scalar e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const Scalar e = std::exp(x);
  return e / (1.0 + e);
}

Scalar digamma(Scalar x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: x must be positive");
  Scalar result = 0.0;
  // Shift into the asymptotic regime.
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const Scalar inv = 1.0 / x;
  const Scalar inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
  return result;
}

namespace {

// Series for the regularized lower incomplete gamma P(a, x), x < a + 1.
Scalar gamma_p_series(Scalar a, Scalar x) {
  Scalar ap = a;
  Scalar sum = 1.0 / a;
  Scalar del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x), x >= a + 1. Returns log Q.
Scalar log_gamma_q_cf(Scalar a, Scalar x) {
  const Scalar tiny = 1e-300;
  Scalar b = x + 1.0 - a;
  Scalar c = 1.0 / tiny;
  Scalar d = 1.0 / b;
  Scalar h = d;
  for (int i = 1; i <= 500; ++i) {
    const Scalar an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const Scalar del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return -x + a * std::log(x) - std::lgamma(a) + std::log(h);
}

}  // namespace

Scalar log_gamma_q(Scalar a, Scalar x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("log_gamma_q: bad args");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) {
    const Scalar p = gamma_p_series(a, x);
    if (p >= 1.0) return -std::numeric_limits<Scalar>::infinity();
    return std::log1p(-p);
  }
  return log_gamma_q_cf(a, x);
}

Scalar erfcx(Scalar x) {
  if (x < 5.0) return std::exp(x * x) * std::erfc(x);
  // Asymptotic continued fraction, accurate for large x.
  const Scalar inv2x2 = 1.0 / (2.0 * x * x);
  Scalar s = 1.0;
  Scalar term = 1.0;
  for (int n = 1; n <= 10; ++n) {
    term *= -(2 * n - 1) * inv2x2;
    s += term;
  }
  return s / (x * std::sqrt(M_PI));
}

Scalar log_normal_sf(Scalar z) {
  static const Scalar inv_sqrt2 = 1.0 / std::sqrt(2.0);
  if (z < 8.0) {
    return std::log(0.5 * std::erfc(z * inv_sqrt2));
  }
  // log(0.5 erfc(z/sqrt2)) = -z^2/2 + log(0.5 erfcx(z/sqrt2))
  return -0.5 * z * z + std::log(0.5 * erfcx(z * inv_sqrt2));
}

}  // namespace servtime::nn
