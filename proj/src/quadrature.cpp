#include "servtime/quadrature.hpp"

#include <cmath>

namespace servtime {

namespace {

Scalar simpson(const std::function<Scalar(Scalar)>& f, Scalar a, Scalar fa,
               Scalar b, Scalar fb, Scalar* fm_out) {
  const Scalar m = 0.5 * (a + b);
  const Scalar fm = f(m);
  *fm_out = fm;
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

Scalar recurse(const std::function<Scalar(Scalar)>& f, Scalar a, Scalar fa,
               Scalar b, Scalar fb, Scalar whole, Scalar fm, Scalar tol,
               int depth) {
  const Scalar m = 0.5 * (a + b);
  Scalar flm, frm;
  const Scalar left = simpson(f, a, fa, m, fm, &flm);
  const Scalar right = simpson(f, m, fm, b, fb, &frm);
  const Scalar err = left + right - whole;
  if (depth <= 0 || std::abs(err) < 15.0 * tol)
    return left + right + err / 15.0;
  return recurse(f, a, fa, m, fm, left, flm, tol / 2.0, depth - 1) +
         recurse(f, m, fm, b, fb, right, frm, tol / 2.0, depth - 1);
}

}  // namespace

Scalar adaptive_simpson(const std::function<Scalar(Scalar)>& f, Scalar a,
                        Scalar b, Scalar tol, int max_depth) {
  if (a == b) return 0.0;
  const Scalar fa = f(a);
  const Scalar fb = f(b);
  Scalar fm;
  const Scalar whole = simpson(f, a, fa, b, fb, &fm);
  return recurse(f, a, fa, b, fb, whole, fm, tol, max_depth);
}

}  // namespace servtime
