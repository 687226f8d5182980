#include "servtime/rpp/head.hpp"

#include <cmath>
#include <stdexcept>

#include "servtime/quadrature.hpp"

namespace servtime::rpp {

namespace {

// Integrated intensity over [0, tau]: e^alpha (e^{w tau} - 1)/w, with the
// series limit for small |w tau|.
Scalar integrated_intensity(const ExpHead& head, Scalar tau) {
  const Scalar wt = head.w * tau;
  if (std::abs(head.w) < kSmallW || std::abs(wt) < 1e-12) {
    return std::exp(head.alpha) * tau * (1.0 + 0.5 * wt + wt * wt / 6.0);
  }
  return std::exp(head.alpha) * std::expm1(wt) / head.w;
}

}  // namespace

Scalar intensity(const ExpHead& head, Scalar dt) {
  if (dt < 0.0) throw std::invalid_argument("intensity: t before last arrival");
  return std::exp(head.alpha + head.w * dt);
}

Scalar log_f_star(const ExpHead& head, Scalar delta) {
  if (delta < 0.0) throw std::invalid_argument("log_f_star: delta < 0");
  return head.alpha + head.w * delta - integrated_intensity(head, delta);
}

Scalar survival(const ExpHead& head, Scalar tau) {
  if (tau < 0.0) throw std::invalid_argument("survival: tau < 0");
  return std::exp(-integrated_intensity(head, tau));
}

Scalar survival_at_inf(const ExpHead& head) {
  if (head.w >= 0.0) return 0.0;
  return std::exp(std::exp(head.alpha) / head.w);
}

ExpectedNext expected_next(const ExpHead& head, Scalar horizon, Scalar tol) {
  ExpectedNext out;
  auto g = [&](Scalar t) { return survival(head, t); };
  if (head.w < -kSmallW) {
    // Defective: G(inf) > 0, the unconditional mean diverges. Report the
    // mean conditional on an arrival before the horizon.
    out.defective = true;
    const Scalar g_h = survival(head, horizon);
    const Scalar mass = 1.0 - g_h;
    if (mass <= 0.0) {
      out.value = horizon;
      return out;
    }
    const Scalar integral = adaptive_simpson(
        [&](Scalar t) { return g(t) - g_h; }, 0.0, horizon, tol);
    out.value = integral / mass;
    return out;
  }
  // Proper case: truncate where G drops below 1e-12.
  const Scalar log_trunc = -std::log(1e-12);  // integrated intensity target
  Scalar t_max;
  if (head.w > kSmallW) {
    t_max = std::log1p(log_trunc * head.w * std::exp(-head.alpha)) / head.w;
  } else {
    t_max = log_trunc * std::exp(-head.alpha);
  }
  t_max = std::min(t_max, horizon);
  out.value = adaptive_simpson(g, 0.0, t_max, tol);
  return out;
}

std::optional<Scalar> inverse_cdf_sample(const ExpHead& head, Scalar y) {
  if (!(y >= 0.0 && y < 1.0))
    throw std::invalid_argument("inverse_cdf_sample: y outside [0,1)");
  if (y == 0.0) return 0.0;
  // F(tau) = y  <=>  integrated intensity = -log(1-y).
  const Scalar target = -std::log1p(-y);  // = -log(1-y) > 0
  const Scalar l = target * std::exp(-head.alpha);
  if (std::abs(head.w) < kSmallW) {
    // tau = (1/w) log(1 + w l), expanded to third order.
    return l * (1.0 - 0.5 * head.w * l + head.w * head.w * l * l / 3.0);
  }
  const Scalar arg = 1.0 + head.w * l;
  if (arg <= 0.0) return std::nullopt;  // y >= F(inf), mass never arrives
  return std::log(arg) / head.w;
}

nn::ValueRef log_f_star_node(nn::Tape& t, nn::ValueRef alpha, nn::ValueRef w,
                             Scalar delta) {
  // alpha + w delta - e^alpha * (e^{w delta} - 1)/w
  nn::ValueRef log_lam = t.add(alpha, t.scale(w, delta));
  nn::ValueRef integral = t.mul(t.exp_(alpha), t.expm1_over_w(w, delta));
  return t.sub(log_lam, integral);
}

}  // namespace servtime::rpp
