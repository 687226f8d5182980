#include "servtime/nsx/families.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "servtime/nn/special.hpp"

namespace servtime::nsx {

namespace {
constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
constexpr Scalar kFloor = 1e-6;
const Scalar kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);
}  // namespace

Family parse_family(const std::string& name) {
  if (name == "gamma") return Family::Gamma;
  if (name == "exponential") return Family::Exponential;
  if (name == "pareto") return Family::Pareto;
  if (name == "chi-square" || name == "chi_square") return Family::ChiSquare;
  if (name == "log-normal" || name == "log_normal") return Family::LogNormal;
  throw std::invalid_argument("unknown service family: " + name);
}

std::string family_name(Family f) {
  switch (f) {
    case Family::Gamma: return "gamma";
    case Family::Exponential: return "exponential";
    case Family::Pareto: return "pareto";
    case Family::ChiSquare: return "chi-square";
    case Family::LogNormal: return "log-normal";
  }
  return "?";
}

int param_count(Family f) {
  switch (f) {
    case Family::Exponential:
    case Family::ChiSquare:
      return 1;
    default:
      return 2;
  }
}

Scalar log_pdf(Family f, const Vec& p, Scalar s) {
  if (!(s > 0.0)) return kNegInf;
  switch (f) {
    case Family::Gamma: {
      const Scalar a = p[0], b = p[1];
      return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(s) -
             b * s;
    }
    case Family::Exponential:
      return std::log(p[0]) - p[0] * s;
    case Family::Pareto: {
      const Scalar a = p[0], xm = p[1];
      if (s < xm) return kNegInf;
      return std::log(a) + a * std::log(xm) - (a + 1.0) * std::log(s);
    }
    case Family::ChiSquare: {
      const Scalar k2 = p[0] / 2.0;
      return -k2 * std::log(2.0) - std::lgamma(k2) + (k2 - 1.0) * std::log(s) -
             s / 2.0;
    }
    case Family::LogNormal: {
      const Scalar z = (std::log(s) - p[0]) / p[1];
      return -std::log(s) - std::log(p[1]) - kLogSqrt2Pi - 0.5 * z * z;
    }
  }
  return kNegInf;
}

Scalar log_survival(Family f, const Vec& p, Scalar T) {
  if (T <= 0.0) return 0.0;
  switch (f) {
    case Family::Gamma:
      return nn::log_gamma_q(p[0], p[1] * T);
    case Family::Exponential:
      return -p[0] * T;
    case Family::Pareto: {
      const Scalar a = p[0], xm = p[1];
      if (T <= xm) return 0.0;  // survival 1 below the support
      return a * (std::log(xm) - std::log(T));
    }
    case Family::ChiSquare:
      return nn::log_gamma_q(p[0] / 2.0, T / 2.0);
    case Family::LogNormal:
      return nn::log_normal_sf((std::log(T) - p[0]) / p[1]);
  }
  return 0.0;
}

namespace {

// Marsaglia-Tsang gamma sampler, shape a > 0, unit rate.
Scalar sample_gamma_shape(Scalar a, Rng& rng) {
  if (a < 1.0) {
    const Scalar u = rng.uniform();
    return sample_gamma_shape(a + 1.0, rng) * std::pow(u, 1.0 / a);
  }
  const Scalar d = a - 1.0 / 3.0;
  const Scalar c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    Scalar x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const Scalar u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

Scalar sample(Family f, const Vec& p, Rng& rng) {
  switch (f) {
    case Family::Gamma:
      return sample_gamma_shape(p[0], rng) / p[1];
    case Family::Exponential:
      return rng.exponential(p[0]);
    case Family::Pareto:
      return p[1] * std::pow(1.0 - rng.uniform(), -1.0 / p[0]);
    case Family::ChiSquare:
      return 2.0 * sample_gamma_shape(p[0] / 2.0, rng);
    case Family::LogNormal:
      return std::exp(p[0] + p[1] * rng.normal());
  }
  return 0.0;
}

Scalar family_mean(Family f, const Vec& p) {
  switch (f) {
    case Family::Gamma:
      return p[0] / p[1];
    case Family::Exponential:
      return 1.0 / p[0];
    case Family::Pareto:
      return p[0] > 1.0 ? p[0] * p[1] / (p[0] - 1.0)
                        : std::numeric_limits<Scalar>::infinity();
    case Family::ChiSquare:
      return p[0];
    case Family::LogNormal:
      return std::exp(p[0] + 0.5 * p[1] * p[1]);
  }
  return 0.0;
}

nn::ValueRef link_params(nn::Tape& t, Family f, nn::ValueRef raw,
                         Scalar pareto_cap) {
  switch (f) {
    case Family::Gamma:
    case Family::Exponential:
    case Family::ChiSquare:
      return t.affine(t.softplus_(raw), 1.0, 1e-6);
    case Family::Pareto: {
      nn::ValueRef a = t.affine(t.softplus_(t.slice(raw, 0, 1)), 1.0, 1e-6);
      nn::ValueRef xm = t.scale(t.sigmoid_(t.slice(raw, 1, 1)), pareto_cap);
      return t.concat({a, xm});
    }
    case Family::LogNormal: {
      nn::ValueRef mu = t.slice(raw, 0, 1);
      nn::ValueRef sigma =
          t.affine(t.softplus_(t.slice(raw, 1, 1)), 1.0, 1e-6);
      return t.concat({mu, sigma});
    }
  }
  throw std::logic_error("link_params: unreachable");
}

Vec link_params_value(Family f, const Vec& raw, Scalar pareto_cap) {
  Vec p(raw.size());
  switch (f) {
    case Family::Gamma:
    case Family::Exponential:
    case Family::ChiSquare:
      for (int i = 0; i < raw.size(); ++i) p[i] = nn::softplus(raw[i]) + 1e-6;
      return p;
    case Family::Pareto:
      p[0] = nn::softplus(raw[0]) + 1e-6;
      p[1] = pareto_cap * nn::sigmoid(raw[1]);
      return p;
    case Family::LogNormal:
      p[0] = raw[0];
      p[1] = nn::softplus(raw[1]) + 1e-6;
      return p;
  }
  throw std::logic_error("link_params_value: unreachable");
}

nn::ValueRef log_pdf_node(nn::Tape& t, Family f, nn::ValueRef p, Scalar s) {
  const Scalar log_s = std::log(s);
  switch (f) {
    case Family::Gamma: {
      nn::ValueRef a = t.slice(p, 0, 1);
      nn::ValueRef b = t.slice(p, 1, 1);
      // a log b - lgamma(a) + (a-1) log s - b s
      nn::ValueRef out = t.mul(a, t.log_(b));
      out = t.sub(out, t.lgamma_(a));
      out = t.add(out, t.scale(t.affine(a, 1.0, -1.0), log_s));
      return t.sub(out, t.scale(b, s));
    }
    case Family::Exponential: {
      return t.sub(t.log_(p), t.scale(p, s));
    }
    case Family::Pareto: {
      nn::ValueRef a = t.slice(p, 0, 1);
      nn::ValueRef xm = t.slice(p, 1, 1);
      // log a + a log x_m - (a+1) log s
      nn::ValueRef out = t.add(t.log_(a), t.mul(a, t.log_(xm)));
      return t.sub(out, t.scale(t.affine(a, 1.0, 1.0), log_s));
    }
    case Family::ChiSquare: {
      nn::ValueRef k2 = t.scale(p, 0.5);
      nn::ValueRef out = t.scale(k2, -std::log(2.0));
      out = t.sub(out, t.lgamma_(k2));
      out = t.add(out, t.scale(t.affine(k2, 1.0, -1.0), log_s));
      return t.affine(out, 1.0, -s / 2.0);
    }
    case Family::LogNormal: {
      nn::ValueRef mu = t.slice(p, 0, 1);
      nn::ValueRef sigma = t.slice(p, 1, 1);
      nn::ValueRef z = t.mul(t.affine(t.neg(mu), 1.0, log_s), t.inv(sigma));
      nn::ValueRef out = t.neg(t.log_(sigma));
      out = t.sub(out, t.scale(t.square_(z), 0.5));
      return t.affine(out, 1.0, -log_s - kLogSqrt2Pi);
    }
  }
  throw std::logic_error("log_pdf_node: unreachable");
}

nn::ValueRef log_survival_node(nn::Tape& t, Family f, nn::ValueRef p,
                               Scalar T) {
  switch (f) {
    case Family::Gamma: {
      nn::ValueRef a = t.slice(p, 0, 1);
      nn::ValueRef x = t.scale(t.slice(p, 1, 1), T);
      return t.log_gamma_q_(a, x);
    }
    case Family::Exponential:
      return t.scale(p, -T);
    case Family::Pareto: {
      nn::ValueRef a = t.slice(p, 0, 1);
      nn::ValueRef xm = t.slice(p, 1, 1);
      if (t.scalar(xm) >= T) return t.constant(0.0);
      return t.mul(a, t.affine(t.log_(xm), 1.0, -std::log(T)));
    }
    case Family::ChiSquare: {
      nn::ValueRef a = t.scale(p, 0.5);
      return t.log_gamma_q_(a, t.constant(T / 2.0));
    }
    case Family::LogNormal: {
      nn::ValueRef mu = t.slice(p, 0, 1);
      nn::ValueRef sigma = t.slice(p, 1, 1);
      nn::ValueRef z =
          t.mul(t.affine(t.neg(mu), 1.0, std::log(T)), t.inv(sigma));
      return t.log_normal_sf_(z);
    }
  }
  throw std::logic_error("log_survival_node: unreachable");
}

}  // namespace servtime::nsx
