#include "servtime/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "servtime/nn/special.hpp"

namespace servtime::nn {

void init_uniform(ParamTensor& w, int fan_in, int fan_out, Rng& rng) {
  const Scalar a = std::sqrt(6.0 / (fan_in + fan_out));
  for (int i = 0; i < w.size(); ++i) w.values[i] = rng.uniform(-a, a);
}

Mlp::Mlp(const std::string& prefix, const std::vector<int>& dims, Rng& rng)
    : dims_(dims) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need >= 2 dims");
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("Mlp: dims must be positive");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    ParamTensor w = ParamTensor::matrix(prefix + ".W" + std::to_string(l),
                                        dims[l + 1], dims[l]);
    init_uniform(w, dims[l], dims[l + 1], rng);
    params_.push_back(std::move(w));
    params_.push_back(
        ParamTensor::vector(prefix + ".b" + std::to_string(l), dims[l + 1]));
  }
}

ValueRef Mlp::forward(Tape& t, ValueRef input,
                      const std::vector<Vec>* noise) const {
  if (t.size(input) != dims_.front())
    throw std::invalid_argument("Mlp::forward: input dim mismatch");
  if (noise && static_cast<int>(noise->size()) != n_hidden())
    throw std::invalid_argument("Mlp::forward: noise vector count mismatch");
  ValueRef h = input;
  const int n_layers = static_cast<int>(dims_.size()) - 1;
  for (int l = 0; l < n_layers; ++l) {
    ValueRef w = t.param(const_cast<ParamTensor&>(params_[2 * l]));
    ValueRef b = t.param(const_cast<ParamTensor&>(params_[2 * l + 1]));
    ValueRef z = t.add(t.matvec(w, h, dims_[l + 1], dims_[l]), b);
    if (l < n_layers - 1) {
      if (noise) {
        if ((*noise)[l].size() != dims_[l + 1])
          throw std::invalid_argument("Mlp::forward: noise dim mismatch");
        z = t.add(z, t.constant((*noise)[l]));
      }
      h = t.tanh_(z);
    } else {
      h = z;  // linear output
    }
  }
  return h;
}

Vec Mlp::forward_value(const Vec& input, const std::vector<Vec>* noise) const {
  if (input.size() != dims_.front())
    throw std::invalid_argument("Mlp::forward_value: input dim mismatch");
  Vec h = input;
  const int n_layers = static_cast<int>(dims_.size()) - 1;
  for (int l = 0; l < n_layers; ++l) {
    RowMatCMap W(params_[2 * l].values.data(), dims_[l + 1], dims_[l]);
    Vec z = W * h + params_[2 * l + 1].values;
    if (l < n_layers - 1) {
      if (noise) z += (*noise)[l];
      h = z.array().tanh();
    } else {
      h = z;
    }
  }
  return h;
}

Mlp::WithGrad Mlp::forward_with_input_grad(Tape& t, ValueRef input,
                                           int coord) const {
  if (dims_.back() != 1)
    throw std::invalid_argument("forward_with_input_grad: output must be scalar");
  ValueRef h = input;
  // Forward-mode tangent of the input coordinate, built from tape ops so a
  // reverse sweep differentiates the input-gradient w.r.t. the weights too.
  Vec e = Vec::Zero(dims_.front());
  e[coord] = 1.0;
  ValueRef v = t.constant(e);
  const int n_layers = static_cast<int>(dims_.size()) - 1;
  for (int l = 0; l < n_layers; ++l) {
    ValueRef w = t.param(const_cast<ParamTensor&>(params_[2 * l]));
    ValueRef b = t.param(const_cast<ParamTensor&>(params_[2 * l + 1]));
    ValueRef z = t.add(t.matvec(w, h, dims_[l + 1], dims_[l]), b);
    ValueRef vz = t.matvec(w, v, dims_[l + 1], dims_[l]);
    if (l < n_layers - 1) {
      h = t.tanh_(z);
      // d tanh = (1 - h^2)
      ValueRef dtanh = t.affine(t.square_(h), -1.0, 1.0);
      v = t.mul(vz, dtanh);
    } else {
      h = z;
      v = vz;
    }
  }
  return {h, v};
}

std::vector<Vec> Mlp::draw_noise(Rng& rng) const {
  std::vector<Vec> out;
  for (int l = 0; l < n_hidden(); ++l) out.push_back(rng.normal_vec(dims_[l + 1]));
  return out;
}

namespace {
ParamTensor make_gate_w(const std::string& name, int rows, int cols, Rng& rng) {
  ParamTensor p = ParamTensor::matrix(name, rows, cols);
  init_uniform(p, cols, rows, rng);
  return p;
}
}  // namespace

GruCell::GruCell(const std::string& prefix, int input_dim, int hidden_dim,
                 Rng& rng)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  if (input_dim <= 0 || hidden_dim <= 0)
    throw std::invalid_argument("GruCell: dims must be positive");
  for (const char* g : {"z", "r", "c"}) {
    params_.push_back(
        make_gate_w(prefix + ".W" + g, hidden_dim, input_dim, rng));
    params_.push_back(
        make_gate_w(prefix + ".U" + g, hidden_dim, hidden_dim, rng));
    params_.push_back(ParamTensor::vector(prefix + ".b" + std::string(g), hidden_dim));
  }
}

ValueRef GruCell::step(Tape& t, ValueRef x, ValueRef h_prev) const {
  if (t.size(x) != input_dim_ || t.size(h_prev) != hidden_dim_)
    throw std::invalid_argument("GruCell::step: dim mismatch");
  auto& P = const_cast<std::vector<ParamTensor>&>(params_);
  auto gate = [&](int base, ValueRef hin) {
    ValueRef w = t.param(P[base]);
    ValueRef u = t.param(P[base + 1]);
    ValueRef b = t.param(P[base + 2]);
    return t.add(t.add(t.matvec(w, x, hidden_dim_, input_dim_),
                       t.matvec(u, hin, hidden_dim_, hidden_dim_)),
                 b);
  };
  ValueRef z = t.sigmoid_(gate(0, h_prev));
  ValueRef r = t.sigmoid_(gate(3, h_prev));
  ValueRef rh = t.mul(r, h_prev);
  ValueRef c = t.tanh_(gate(6, rh));
  ValueRef one_minus_z = t.affine(z, -1.0, 1.0);
  return t.add(t.mul(z, h_prev), t.mul(one_minus_z, c));
}

Vec GruCell::step_value(const Vec& x, const Vec& h_prev) const {
  auto mat = [&](const ParamTensor& p) {
    return RowMatCMap(p.values.data(), hidden_dim_,
                      static_cast<int>(p.values.size()) / hidden_dim_);
  };
  auto pre = [&](int base, const Vec& hin) -> Vec {
    return mat(params_[base]) * x + mat(params_[base + 1]) * hin +
           params_[base + 2].values;
  };
  Vec z = pre(0, h_prev), r = pre(3, h_prev);
  for (int i = 0; i < hidden_dim_; ++i) {
    z[i] = sigmoid(z[i]);
    r[i] = sigmoid(r[i]);
  }
  Vec rh = r.cwiseProduct(h_prev);
  Vec c = pre(6, rh);
  for (int i = 0; i < hidden_dim_; ++i) c[i] = std::tanh(c[i]);
  return z.cwiseProduct(h_prev) +
         (1.0 - z.array()).matrix().cwiseProduct(c);
}

LstmCell::LstmCell(const std::string& prefix, int input_dim, int hidden_dim,
                   Rng& rng)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  if (input_dim <= 0 || hidden_dim <= 0)
    throw std::invalid_argument("LstmCell: dims must be positive");
  for (const char* g : {"i", "f", "o", "g"}) {
    params_.push_back(
        make_gate_w(prefix + ".W" + g, hidden_dim, input_dim, rng));
    params_.push_back(
        make_gate_w(prefix + ".U" + g, hidden_dim, hidden_dim, rng));
    params_.push_back(ParamTensor::vector(prefix + ".b" + std::string(g), hidden_dim));
  }
}

std::pair<Vec, Vec> LstmCell::step_value(const Vec& x, const Vec& h_prev,
                                         const Vec& c_prev) const {
  auto mat = [&](const ParamTensor& p) {
    return RowMatCMap(p.values.data(), hidden_dim_,
                      static_cast<int>(p.values.size()) / hidden_dim_);
  };
  auto pre = [&](int base) -> Vec {
    return mat(params_[base]) * x + mat(params_[base + 1]) * h_prev +
           params_[base + 2].values;
  };
  Vec i = pre(0), f = pre(3), o = pre(6), g = pre(9);
  for (int k = 0; k < hidden_dim_; ++k) {
    i[k] = sigmoid(i[k]);
    f[k] = sigmoid(f[k]);
    o[k] = sigmoid(o[k]);
    g[k] = std::tanh(g[k]);
  }
  Vec c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  Vec h = o.cwiseProduct(c.array().tanh().matrix());
  return {h, c};
}

LstmCell::State LstmCell::step(Tape& t, ValueRef x, State prev) const {
  if (t.size(x) != input_dim_ || t.size(prev.h) != hidden_dim_ ||
      t.size(prev.c) != hidden_dim_)
    throw std::invalid_argument("LstmCell::step: dim mismatch");
  auto& P = const_cast<std::vector<ParamTensor>&>(params_);
  auto gate = [&](int base) {
    ValueRef w = t.param(P[base]);
    ValueRef u = t.param(P[base + 1]);
    ValueRef b = t.param(P[base + 2]);
    return t.add(t.add(t.matvec(w, x, hidden_dim_, input_dim_),
                       t.matvec(u, prev.h, hidden_dim_, hidden_dim_)),
                 b);
  };
  ValueRef i = t.sigmoid_(gate(0));
  ValueRef f = t.sigmoid_(gate(3));
  ValueRef o = t.sigmoid_(gate(6));
  ValueRef g = t.tanh_(gate(9));
  ValueRef c = t.add(t.mul(f, prev.c), t.mul(i, g));
  ValueRef h = t.mul(o, t.tanh_(c));
  return {h, c};
}

}  // namespace servtime::nn
