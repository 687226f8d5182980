#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oracles {

namespace {

struct SimpsonCtx {
  const std::function<Scalar(Scalar)>* f = nullptr;
  long evals = 0;
  Scalar err = 0.0;

  Scalar call(Scalar x) {
    ++evals;
    return (*f)(x);
  }

  Scalar recurse(Scalar a, Scalar b, Scalar fa, Scalar fm, Scalar fb,
                 Scalar whole, Scalar tol, int depth) {
    const Scalar m = 0.5 * (a + b);
    const Scalar lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const Scalar flm = call(lm), frm = call(rm);
    const Scalar left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const Scalar right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const Scalar delta = left + right - whole;
    if (depth <= 0) {
      if (std::abs(delta) > 15.0 * tol)
        throw std::runtime_error("quad: adaptive Simpson did not converge");
      err += std::abs(delta) / 15.0;
      return left + right + delta / 15.0;
    }
    if (std::abs(delta) <= 15.0 * tol) {
      err += std::abs(delta) / 15.0;
      return left + right + delta / 15.0;
    }
    return recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
  }

  Scalar finite(Scalar a, Scalar b, Scalar tol) {
    const Scalar m = 0.5 * (a + b);
    const Scalar fa = call(a), fm = call(m), fb = call(b);
    const Scalar whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return recurse(a, b, fa, fm, fb, whole, tol, 48);
  }
};

}  // namespace

QuadratureResult quad(const std::function<Scalar(Scalar)>& f, Scalar a,
                      Scalar b, Scalar tol) {
  SimpsonCtx ctx;
  ctx.f = &f;
  QuadratureResult out;
  if (std::isinf(b)) {
    // Unit chunks; stop once a chunk's endpoints and midpoint all fall
    // below the tail cutoff.
    Scalar lo = a;
    Scalar total = 0.0;
    const Scalar cutoff = 1e-14;
    for (int chunk = 0; chunk < 100000; ++chunk) {
      const Scalar hi = lo + 1.0;
      total += ctx.finite(lo, hi, tol * 0.5);
      const Scalar tail = std::max({std::abs(f(hi)), std::abs(f(hi + 0.5)),
                                    std::abs(f(hi + 1.0))});
      lo = hi;
      if (tail < cutoff) break;
      if (chunk == 99999)
        throw std::runtime_error("quad: tail did not decay");
    }
    out.value = total;
  } else {
    out.value = ctx.finite(a, b, tol);
  }
  out.abs_error_estimate = ctx.err;
  out.evaluations = ctx.evals;
  return out;
}

std::vector<Vec> fd_grad(const std::function<Scalar()>& eval,
                         const std::vector<servtime::nn::ParamTensor*>& params,
                         Scalar h) {
  std::vector<Vec> out;
  out.reserve(params.size());
  for (auto* p : params) {
    Vec g(p->size());
    for (int i = 0; i < p->size(); ++i) {
      const Scalar keep = p->values[i];
      p->values[i] = keep + h;
      const Scalar up = eval();
      p->values[i] = keep - h;
      const Scalar down = eval();
      p->values[i] = keep;
      g[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

Scalar max_rel_err(const std::vector<Vec>& fd,
                   const std::vector<servtime::nn::ParamTensor*>& params,
                   Scalar abs_floor) {
  Scalar worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Vec& g = params[k]->grad;
    for (int i = 0; i < g.size(); ++i) {
      const Scalar denom =
          std::max(abs_floor, std::max(std::abs(g[i]), std::abs(fd[k][i])));
      worst = std::max(worst, std::abs(g[i] - fd[k][i]) / denom);
    }
  }
  return worst;
}

std::optional<Scalar> thinning_sample(const servtime::rpp::ExpHead& head,
                                      servtime::Rng& rng) {
  const Scalar alpha = head.alpha, w = head.w;
  auto lam = [&](Scalar t) { return std::exp(alpha + w * t); };
  Scalar t = 0.0;
  const Scalar step = 0.5 / std::max(1.0, std::abs(w));
  for (long iter = 0; iter < 100000000L; ++iter) {
    // Remaining defective mass beyond t is lam(t)/|w|; give up once it is
    // negligible relative to the total mass.
    if (w < 0.0 && lam(t) / -w < 1e-14) return std::nullopt;
    const Scalar bound = w > 0.0 ? lam(t + step) : lam(t);
    if (bound <= 0.0 || !std::isfinite(bound)) return std::nullopt;
    const Scalar e = rng.exponential(bound);
    if (e > step) {
      t += step;
      continue;
    }
    t += e;
    if (rng.uniform() * bound <= lam(t)) return t;
  }
  throw std::runtime_error("thinning_sample: iteration cap hit");
}

Scalar brute_force_ks(const std::vector<Scalar>& a,
                      const std::vector<Scalar>& b) {
  std::vector<Scalar> support = a;
  support.insert(support.end(), b.begin(), b.end());
  Scalar best = 0.0;
  for (Scalar x : support) {
    long ca = 0, cb = 0;
    for (Scalar v : a) ca += v <= x;
    for (Scalar v : b) cb += v <= x;
    const Scalar fa = static_cast<Scalar>(ca) / a.size();
    const Scalar fb = static_cast<Scalar>(cb) / b.size();
    best = std::max(best, std::abs(fa - fb));
  }
  return best;
}

Scalar e1_series(Scalar x) {
  if (x <= 0.0) throw std::invalid_argument("e1_series: x must be positive");
  const Scalar euler_gamma = 0.57721566490153286060;
  Scalar sum = 0.0, term = 0.0, fact = 1.0;
  for (int k = 1; k <= 200; ++k) {
    fact *= k;
    term = std::pow(-1.0, k + 1) * std::pow(x, k) / (k * fact);
    sum += term;
    if (std::abs(term) < 1e-18 * std::max(1.0, std::abs(sum))) break;
  }
  return -euler_gamma - std::log(x) + sum;
}

std::vector<Scalar> ps_walk(const std::vector<Scalar>& arrivals,
                            const std::vector<Scalar>& requirements) {
  const int n = static_cast<int>(arrivals.size());
  std::vector<Scalar> remaining = requirements;
  std::vector<Scalar> done(n, 0.0);
  std::vector<bool> active(n, false), finished(n, false);
  Scalar now = arrivals.empty() ? 0.0 : arrivals.front();
  int next_arrival = 0;
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  while (true) {
    int n_active = 0;
    for (int i = 0; i < n; ++i) n_active += active[i];
    // Earliest completion among active jobs at the shared 1/U rate.
    Scalar t_done = inf;
    if (n_active > 0) {
      Scalar min_rem = inf;
      for (int i = 0; i < n; ++i)
        if (active[i]) min_rem = std::min(min_rem, remaining[i]);
      t_done = now + min_rem * n_active;
    }
    const Scalar t_arr = next_arrival < n ? arrivals[next_arrival] : inf;
    if (t_done == inf && t_arr == inf) break;
    const Scalar t_next = std::min(t_done, t_arr);
    if (n_active > 0) {
      const Scalar drained = (t_next - now) / n_active;
      for (int i = 0; i < n; ++i)
        if (active[i]) remaining[i] -= drained;
    }
    now = t_next;
    for (int i = 0; i < n; ++i) {
      if (active[i] && remaining[i] <= 1e-12) {
        active[i] = false;
        finished[i] = true;
        done[i] = now;
      }
    }
    while (next_arrival < n && arrivals[next_arrival] <= now + 1e-15) {
      active[next_arrival] = true;
      ++next_arrival;
    }
  }
  return done;
}

}  // namespace oracles
