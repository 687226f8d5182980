#include "servtime/nn/tape.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "servtime/nn/special.hpp"

namespace servtime::nn {

namespace {
int shape_size(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}
}  // namespace

ParamTensor ParamTensor::matrix(const std::string& name, int rows, int cols) {
  ParamTensor p;
  p.name = name;
  p.shape = {rows, cols};
  p.values = Vec::Zero(rows * cols);
  p.grad = Vec::Zero(rows * cols);
  return p;
}

ParamTensor ParamTensor::vector(const std::string& name, int n) {
  ParamTensor p;
  p.name = name;
  p.shape = {n};
  p.values = Vec::Zero(n);
  p.grad = Vec::Zero(n);
  return p;
}

ParamTensor ParamTensor::scalar(const std::string& name) {
  return vector(name, 1);
}

ValueRef Tape::push(Vec value, std::function<void(Tape&, const Vec&)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return ValueRef{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(int idx, const Vec& contribution) {
  Node& n = nodes_[idx];
  if (n.adjoint.size() == 0) n.adjoint = Vec::Zero(n.value.size());
  n.adjoint += contribution;
}

ValueRef Tape::constant(Vec v) { return push(std::move(v), nullptr); }

ValueRef Tape::constant(Scalar x) {
  Vec v(1);
  v[0] = x;
  return push(std::move(v), nullptr);
}

ValueRef Tape::zeros(int n) { return push(Vec::Zero(n), nullptr); }

ValueRef Tape::param(ParamTensor& p) {
  if (shape_size(p.shape) != p.size())
    throw std::invalid_argument("param tensor shape/values mismatch: " + p.name);
  ValueRef r = push(p.values, nullptr);
  nodes_[r.idx].bound = &p;
  return r;
}

ValueRef Tape::add(ValueRef a, ValueRef b) {
  if (size(a) != size(b)) throw std::invalid_argument("add: size mismatch");
  return push(val(a.idx) + val(b.idx), [a, b](Tape& t, const Vec& adj) {
    t.accum(a.idx, adj);
    t.accum(b.idx, adj);
  });
}

ValueRef Tape::sub(ValueRef a, ValueRef b) {
  if (size(a) != size(b)) throw std::invalid_argument("sub: size mismatch");
  return push(val(a.idx) - val(b.idx), [a, b](Tape& t, const Vec& adj) {
    t.accum(a.idx, adj);
    t.accum(b.idx, -adj);
  });
}

ValueRef Tape::mul(ValueRef a, ValueRef b) {
  if (size(a) != size(b)) throw std::invalid_argument("mul: size mismatch");
  return push(val(a.idx).cwiseProduct(val(b.idx)),
              [a, b](Tape& t, const Vec& adj) {
                t.accum(a.idx, adj.cwiseProduct(t.val(b.idx)));
                t.accum(b.idx, adj.cwiseProduct(t.val(a.idx)));
              });
}

ValueRef Tape::inv(ValueRef a) {
  return push(val(a.idx).cwiseInverse(), [a](Tape& t, const Vec& adj) {
    const Vec& x = t.val(a.idx);
    t.accum(a.idx, -adj.cwiseQuotient(x.cwiseProduct(x)));
  });
}

ValueRef Tape::affine(ValueRef a, Scalar k, Scalar c) {
  return push((k * val(a.idx)).array() + c,
              [a, k](Tape& t, const Vec& adj) { t.accum(a.idx, k * adj); });
}

ValueRef Tape::matvec(ValueRef w, ValueRef x, int rows, int cols) {
  if (size(w) != rows * cols || size(x) != cols)
    throw std::invalid_argument("matvec: shape mismatch");
  RowMatCMap W(val(w.idx).data(), rows, cols);
  return push(W * val(x.idx), [w, x, rows, cols](Tape& t, const Vec& adj) {
    RowMatCMap W(t.val(w.idx).data(), rows, cols);
    RowMat dW = adj * t.val(x.idx).transpose();
    t.accum(w.idx, Eigen::Map<const Vec>(dW.data(), rows * cols));
    t.accum(x.idx, W.transpose() * adj);
  });
}

ValueRef Tape::dot(ValueRef a, ValueRef b) {
  if (size(a) != size(b)) throw std::invalid_argument("dot: size mismatch");
  Vec v(1);
  v[0] = val(a.idx).dot(val(b.idx));
  return push(std::move(v), [a, b](Tape& t, const Vec& adj) {
    t.accum(a.idx, adj[0] * t.val(b.idx));
    t.accum(b.idx, adj[0] * t.val(a.idx));
  });
}

ValueRef Tape::sum(ValueRef a) {
  Vec v(1);
  v[0] = val(a.idx).sum();
  return push(std::move(v), [a](Tape& t, const Vec& adj) {
    t.accum(a.idx, Vec::Constant(t.size(a), adj[0]));
  });
}

ValueRef Tape::mean(ValueRef a) {
  const int n = size(a);
  Vec v(1);
  v[0] = val(a.idx).mean();
  return push(std::move(v), [a, n](Tape& t, const Vec& adj) {
    t.accum(a.idx, Vec::Constant(n, adj[0] / n));
  });
}

ValueRef Tape::concat(const std::vector<ValueRef>& parts) {
  int total = 0;
  for (ValueRef p : parts) total += size(p);
  Vec v(total);
  int off = 0;
  for (ValueRef p : parts) {
    v.segment(off, size(p)) = val(p.idx);
    off += size(p);
  }
  return push(std::move(v), [parts](Tape& t, const Vec& adj) {
    int off = 0;
    for (ValueRef p : parts) {
      t.accum(p.idx, adj.segment(off, t.size(p)));
      off += t.size(p);
    }
  });
}

ValueRef Tape::slice(ValueRef a, int start, int len) {
  if (start < 0 || start + len > size(a))
    throw std::invalid_argument("slice: out of range");
  return push(val(a.idx).segment(start, len),
              [a, start, len](Tape& t, const Vec& adj) {
                Vec full = Vec::Zero(t.size(a));
                full.segment(start, len) = adj;
                t.accum(a.idx, full);
              });
}

ValueRef Tape::bcast_mul(ValueRef a, ValueRef b) {
  if (size(b) != 1) throw std::invalid_argument("bcast_mul: b not scalar");
  return push(val(a.idx) * val(b.idx)[0], [a, b](Tape& t, const Vec& adj) {
    t.accum(a.idx, adj * t.val(b.idx)[0]);
    Vec g(1);
    g[0] = adj.dot(t.val(a.idx));
    t.accum(b.idx, g);
  });
}

ValueRef Tape::bcast_add(ValueRef a, ValueRef b) {
  if (size(b) != 1) throw std::invalid_argument("bcast_add: b not scalar");
  return push(val(a.idx).array() + val(b.idx)[0],
              [a, b](Tape& t, const Vec& adj) {
                t.accum(a.idx, adj);
                Vec g(1);
                g[0] = adj.sum();
                t.accum(b.idx, g);
              });
}

ValueRef Tape::tanh_(ValueRef a) {
  return push(val(a.idx).array().tanh(), [a](Tape& t, const Vec& adj) {
    Vec th = t.val(a.idx).array().tanh();
    t.accum(a.idx, adj.cwiseProduct((1.0 - th.array().square()).matrix()));
  });
}

ValueRef Tape::sigmoid_(ValueRef a) {
  Vec y(size(a));
  for (int i = 0; i < y.size(); ++i) y[i] = sigmoid(val(a.idx)[i]);
  return push(std::move(y), [a](Tape& t, const Vec& adj) {
    Vec s(t.size(a));
    for (int i = 0; i < s.size(); ++i) s[i] = sigmoid(t.val(a.idx)[i]);
    t.accum(a.idx, adj.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

ValueRef Tape::exp_(ValueRef a) {
  Vec y = val(a.idx).array().exp();
  return push(y, [a, y](Tape& t, const Vec& adj) {
    t.accum(a.idx, adj.cwiseProduct(y));
  });
}

ValueRef Tape::log_(ValueRef a) {
  return push(val(a.idx).array().log(), [a](Tape& t, const Vec& adj) {
    t.accum(a.idx, adj.cwiseQuotient(t.val(a.idx)));
  });
}

ValueRef Tape::softplus_(ValueRef a) {
  Vec y(size(a));
  for (int i = 0; i < y.size(); ++i) y[i] = softplus(val(a.idx)[i]);
  return push(std::move(y), [a](Tape& t, const Vec& adj) {
    Vec s(t.size(a));
    for (int i = 0; i < s.size(); ++i) s[i] = sigmoid(t.val(a.idx)[i]);
    t.accum(a.idx, adj.cwiseProduct(s));
  });
}

ValueRef Tape::relu_(ValueRef a) {
  return push(val(a.idx).cwiseMax(0.0), [a](Tape& t, const Vec& adj) {
    Vec mask = (t.val(a.idx).array() > 0.0).cast<Scalar>();
    t.accum(a.idx, adj.cwiseProduct(mask));
  });
}

ValueRef Tape::abs_(ValueRef a) {
  return push(val(a.idx).cwiseAbs(), [a](Tape& t, const Vec& adj) {
    Vec sgn(t.size(a));
    for (int i = 0; i < sgn.size(); ++i) {
      const Scalar x = t.val(a.idx)[i];
      sgn[i] = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    }
    t.accum(a.idx, adj.cwiseProduct(sgn));
  });
}

ValueRef Tape::square_(ValueRef a) {
  return push(val(a.idx).array().square(), [a](Tape& t, const Vec& adj) {
    t.accum(a.idx, 2.0 * adj.cwiseProduct(t.val(a.idx)));
  });
}

ValueRef Tape::lgamma_(ValueRef a) {
  Vec y(size(a));
  for (int i = 0; i < y.size(); ++i) y[i] = std::lgamma(val(a.idx)[i]);
  return push(std::move(y), [a](Tape& t, const Vec& adj) {
    Vec d(t.size(a));
    for (int i = 0; i < d.size(); ++i) d[i] = digamma(t.val(a.idx)[i]);
    t.accum(a.idx, adj.cwiseProduct(d));
  });
}

ValueRef Tape::log_gamma_q_(ValueRef a, ValueRef x) {
  if (size(a) != 1 || size(x) != 1)
    throw std::invalid_argument("log_gamma_q_: scalar inputs required");
  const Scalar av = scalar(a);
  const Scalar xv = scalar(x);
  Vec y(1);
  y[0] = log_gamma_q(av, xv);
  return push(std::move(y), [a, x, av, xv](Tape& t, const Vec& adj) {
    const Scalar lq = log_gamma_q(av, xv);
    // d/dx log Q = -x^{a-1} e^{-x} / (Gamma(a) Q)
    Vec gx(1);
    gx[0] = -std::exp((av - 1.0) * std::log(xv) - xv - std::lgamma(av) - lq);
    t.accum(x.idx, adj[0] * gx);
    // d/da has no convenient closed form; central difference.
    const Scalar h = 1e-6 * std::max(1.0, std::abs(av));
    Vec ga(1);
    ga[0] = (log_gamma_q(av + h, xv) - log_gamma_q(av - h, xv)) / (2.0 * h);
    t.accum(a.idx, adj[0] * ga);
  });
}

ValueRef Tape::log_normal_sf_(ValueRef z) {
  Vec y(size(z));
  for (int i = 0; i < y.size(); ++i) y[i] = log_normal_sf(val(z.idx)[i]);
  return push(std::move(y), [z](Tape& t, const Vec& adj) {
    Vec d(t.size(z));
    for (int i = 0; i < d.size(); ++i) {
      const Scalar zi = t.val(z.idx)[i];
      // hazard of the standard normal: -phi(z)/SF(z)
      const Scalar log_pdf = -0.5 * zi * zi - 0.5 * std::log(2.0 * M_PI);
      d[i] = -std::exp(log_pdf - log_normal_sf(zi));
    }
    t.accum(z.idx, adj.cwiseProduct(d));
  });
}

namespace {
// phi(w, d) = (e^{wd} - 1)/w and its w-derivative, series branch near wd = 0.
void phi_and_grad(Scalar w, Scalar d, Scalar* phi, Scalar* dphi_dw) {
  const Scalar wd = w * d;
  if (std::abs(wd) < 1e-5) {
    *phi = d * (1.0 + wd / 2.0 + wd * wd / 6.0 + wd * wd * wd / 24.0);
    *dphi_dw = d * d * (0.5 + wd / 3.0 + wd * wd / 8.0);
  } else {
    *phi = std::expm1(wd) / w;
    *dphi_dw = (d * std::exp(wd) - *phi) / w;
  }
}
}  // namespace

ValueRef Tape::expm1_over_w(ValueRef w, Scalar d) {
  if (size(w) != 1) throw std::invalid_argument("expm1_over_w: w not scalar");
  Scalar phi, dphi;
  phi_and_grad(scalar(w), d, &phi, &dphi);
  Vec y(1);
  y[0] = phi;
  return push(std::move(y), [w, d](Tape& t, const Vec& adj) {
    Scalar phi, dphi;
    phi_and_grad(t.scalar(w), d, &phi, &dphi);
    Vec g(1);
    g[0] = adj[0] * dphi;
    t.accum(w.idx, g);
  });
}

void Tape::backward(ValueRef loss) {
  if (size(loss) != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  for (Node& n : nodes_) n.adjoint.resize(0);
  Vec seed(1);
  seed[0] = 1.0;
  nodes_[loss.idx].adjoint = seed;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.adjoint.size() == 0) continue;
    if (n.back) n.back(*this, n.adjoint);
    if (n.bound) n.bound->grad += n.adjoint;
  }
}

}  // namespace servtime::nn
