#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "servtime/nn/adam.hpp"
#include "servtime/nn/checkpoint.hpp"
#include "servtime/nn/layers.hpp"
#include "servtime/nn/special.hpp"
#include "servtime/nn/tape.hpp"
#include "servtime/rng.hpp"

using namespace servtime;
using nn::ParamTensor;
using nn::Tape;
using nn::ValueRef;

namespace {

Vec make_vec(std::initializer_list<Scalar> xs) {
  Vec v(static_cast<int>(xs.size()));
  int i = 0;
  for (Scalar x : xs) v[i++] = x;
  return v;
}

void zero_all(std::vector<ParamTensor>& ps) {
  for (auto& p : ps) p.values.setZero();
}

}  // namespace

TEST_CASE("mlp zero weights emit zero") {
  Rng rng(7);
  nn::Mlp net("m", {3, 4, 2}, rng);
  zero_all(net.params());
  Vec out = net.forward_value(make_vec({0.3, -1.0, 2.0}));
  CHECK(out.norm() == 0.0);
}

TEST_CASE("mlp identity single layer") {
  Rng rng(7);
  nn::Mlp net("m", {2, 2}, rng);
  // single layer => linear output; load the identity row-major
  net.params()[0].values = make_vec({1.0, 0.0, 0.0, 1.0});
  net.params()[1].values.setZero();
  Vec out = net.forward_value(make_vec({1.0, 2.0}));
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("mlp random two-layer matches a scratch forward pass") {
  Rng rng(12);
  nn::Mlp net("m", {2, 3, 1}, rng);
  const Vec x = make_vec({0.5, -0.3});

  // independent arithmetic from the raw tensors
  const auto& P = net.params();
  RowMatCMap W0(P[0].values.data(), 3, 2);
  RowMatCMap W1(P[2].values.data(), 1, 3);
  Vec h = (W0 * x + P[1].values).array().tanh();
  Vec expect = W1 * h + P[3].values;

  Vec got = net.forward_value(x);
  CHECK(std::abs(got[0] - expect[0]) < 1e-12);

  Tape t;
  ValueRef out = net.forward(t, t.constant(x));
  CHECK(std::abs(t.scalar(out) - expect[0]) < 1e-12);
}

TEST_CASE("gru zero params yield zero state") {
  Rng rng(3);
  nn::GruCell cell("g", 2, 3, rng);
  zero_all(cell.params());
  Vec h = cell.step_value(make_vec({1.0, -2.0}), Vec::Zero(3));
  CHECK(h.norm() == 0.0);
}

TEST_CASE("gru saturated update gate carries the state") {
  Rng rng(3);
  nn::GruCell cell("g", 2, 3, rng);
  zero_all(cell.params());
  cell.params()[2].values.setConstant(40.0);  // bz
  Vec h_prev = make_vec({0.4, -0.2, 0.9});
  Vec h = cell.step_value(make_vec({1.0, -2.0}), h_prev);
  CHECK((h - h_prev).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gru step matches scratch oracle") {
  Rng rng(99);
  nn::GruCell cell("g", 2, 4, rng);
  const Vec x = make_vec({0.7, -1.1});
  Vec h_prev(4);
  h_prev << 0.1, -0.5, 0.3, 0.0;

  const auto& P = cell.params();
  auto mat = [&](int i) { return RowMatCMap(P[i].values.data(), 4, P[i].cols()); };
  auto act_sig = [](Vec v) {
    for (int i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-v[i]));
    return v;
  };
  Vec z = act_sig(mat(0) * x + mat(1) * h_prev + P[2].values);
  Vec r = act_sig(mat(3) * x + mat(4) * h_prev + P[5].values);
  Vec c = (mat(6) * x + mat(7) * r.cwiseProduct(h_prev) + P[8].values)
              .array()
              .tanh();
  Vec expect = z.cwiseProduct(h_prev) +
               (Vec::Ones(4) - z).cwiseProduct(c);

  Vec got = cell.step_value(x, h_prev);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);

  Tape t;
  ValueRef hn = cell.step(t, t.constant(x), t.constant(h_prev));
  CHECK((t.value(hn) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lstm zero params yield zero state") {
  Rng rng(4);
  nn::LstmCell cell("l", 2, 3, rng);
  zero_all(cell.params());
  auto [h, c] = cell.step_value(make_vec({1.0, 1.0}), Vec::Zero(3), Vec::Zero(3));
  CHECK(h.norm() == 0.0);
  CHECK(c.norm() == 0.0);
}

TEST_CASE("lstm forget saturation carries the cell") {
  Rng rng(4);
  nn::LstmCell cell("l", 2, 3, rng);
  zero_all(cell.params());
  cell.params()[5].values.setConstant(40.0);   // bf -> forget gate 1
  cell.params()[2].values.setConstant(-40.0);  // bi -> input gate 0
  Vec c_prev = make_vec({0.2, -0.7, 1.5});
  auto [h, c] = cell.step_value(make_vec({0.5, 0.5}), Vec::Zero(3), c_prev);
  CHECK((c - c_prev).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lstm step matches scratch oracle") {
  Rng rng(123);
  nn::LstmCell cell("l", 3, 4, rng);
  const Vec x = make_vec({0.4, -0.9, 1.3});
  Vec h_prev(4), c_prev(4);
  h_prev << 0.1, 0.2, -0.3, 0.0;
  c_prev << -0.2, 0.5, 0.1, 0.7;

  const auto& P = cell.params();
  auto mat = [&](int i) { return RowMatCMap(P[i].values.data(), 4, P[i].cols()); };
  auto act_sig = [](Vec v) {
    for (int i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-v[i]));
    return v;
  };
  Vec i_g = act_sig(mat(0) * x + mat(1) * h_prev + P[2].values);
  Vec f_g = act_sig(mat(3) * x + mat(4) * h_prev + P[5].values);
  Vec o_g = act_sig(mat(6) * x + mat(7) * h_prev + P[8].values);
  Vec g_g = (mat(9) * x + mat(10) * h_prev + P[11].values).array().tanh();
  Vec c_next = f_g.cwiseProduct(c_prev) + i_g.cwiseProduct(g_g);
  Vec h_next = o_g.cwiseProduct(c_next.array().tanh().matrix());

  auto [h, c] = cell.step_value(x, h_prev, c_prev);
  CHECK((h - h_next).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((c - c_next).cwiseAbs().maxCoeff() < 1e-12);

  Tape t;
  auto st = cell.step(t, t.constant(x), {t.constant(h_prev), t.constant(c_prev)});
  CHECK((t.value(st.h) - h_next).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t.value(st.c) - c_next).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward of a parameter sum is all-ones") {
  ParamTensor p = ParamTensor::vector("p", 5);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) p.values[i] = rng.normal();
  p.zero_grad();
  Tape t;
  ValueRef loss = t.sum(t.param(p));
  t.backward(loss);
  CHECK((p.grad - Vec::Ones(5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward of a constant leaves grads at zero") {
  ParamTensor p = ParamTensor::vector("p", 3);
  p.values.setConstant(2.0);
  p.zero_grad();
  Tape t;
  t.param(p);  // touched but unused by the loss
  ValueRef loss = t.constant(5.0);
  t.backward(loss);
  CHECK(p.grad.norm() == 0.0);
}

TEST_CASE("composite tape losses match finite differences") {
  Rng rng(777);
  nn::Mlp net("m", {3, 5, 4, 1}, rng);
  nn::GruCell gru("g", 2, 4, rng);
  const Vec x = rng.normal_vec(3);
  const Vec gx = rng.normal_vec(2);
  const Vec h0 = rng.normal_vec(4);

  std::vector<ParamTensor*> params;
  for (auto& p : net.params()) params.push_back(&p);
  for (auto& p : gru.params()) params.push_back(&p);

  auto eval = [&]() {
    Tape t;
    ValueRef h = gru.step(t, t.constant(gx), t.constant(h0));
    ValueRef m = net.forward(t, t.constant(x));
    ValueRef mix =
        t.add(t.sum(t.softplus_(h)), t.square_(t.log_(t.exp_(m))));
    ValueRef loss = t.add(t.mean(t.sigmoid_(h)), t.sum(mix));
    return t.scalar(loss);
  };
  auto fd = oracles::fd_grad(eval, params);

  for (auto* p : params) p->zero_grad();
  Tape t;
  ValueRef h = gru.step(t, t.constant(gx), t.constant(h0));
  ValueRef m = net.forward(t, t.constant(x));
  ValueRef mix = t.add(t.sum(t.softplus_(h)), t.square_(t.log_(t.exp_(m))));
  ValueRef loss = t.add(t.mean(t.sigmoid_(h)), t.sum(mix));
  t.backward(loss);

  CHECK(oracles::max_rel_err(fd, params) < 1e-4);
}

TEST_CASE("special-function tape primitives match finite differences") {
  ParamTensor a = ParamTensor::scalar("a");
  ParamTensor x = ParamTensor::scalar("x");
  ParamTensor w = ParamTensor::scalar("w");
  a.values[0] = 2.3;
  x.values[0] = 1.7;
  w.values[0] = 0.4;
  std::vector<ParamTensor*> params = {&a, &x, &w};

  auto eval = [&]() {
    Tape t;
    ValueRef na = t.param(a), nx = t.param(x), nw = t.param(w);
    ValueRef u = t.log_gamma_q_(na, nx);
    ValueRef v = t.log_normal_sf_(t.affine(nx, 0.5, -0.2));
    ValueRef q = t.expm1_over_w(nw, 1.3);
    ValueRef loss = t.add(t.add(u, v), t.add(q, t.lgamma_(na)));
    return t.scalar(loss);
  };
  auto fd = oracles::fd_grad(eval, params);

  for (auto* p : params) p->zero_grad();
  Tape t;
  ValueRef na = t.param(a), nx = t.param(x), nw = t.param(w);
  ValueRef u = t.log_gamma_q_(na, nx);
  ValueRef v = t.log_normal_sf_(t.affine(nx, 0.5, -0.2));
  ValueRef q = t.expm1_over_w(nw, 1.3);
  ValueRef loss = t.add(t.add(u, v), t.add(q, t.lgamma_(na)));
  t.backward(loss);

  CHECK(oracles::max_rel_err(fd, params) < 1e-4);
}

TEST_CASE("adam ignores zero gradients") {
  ParamTensor p = ParamTensor::vector("p", 3);
  p.values = make_vec({1.0, -2.0, 0.5});
  p.zero_grad();
  Vec before = p.values;
  nn::Adam opt({&p}, {.lr = 0.1});
  opt.step();
  CHECK((p.values - before).norm() == 0.0);
}

TEST_CASE("adam first step with unit gradient moves by about -lr") {
  ParamTensor p = ParamTensor::scalar("p");
  p.values[0] = 0.0;
  p.grad = Vec::Ones(1);
  nn::Adam opt({&p}, {.lr = 0.001});
  opt.step();
  // bias-corrected m-hat = 1, v-hat = 1 => delta = -lr / (1 + eps)
  CHECK(p.values[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam repeated identical updates move monotonically downhill") {
  ParamTensor p = ParamTensor::scalar("p");
  p.values[0] = 1.0;
  nn::Adam opt({&p}, {.lr = 0.01});
  Scalar last = p.values[0];
  for (int i = 0; i < 5; ++i) {
    p.grad = Vec::Ones(1);
    opt.step();
    CHECK(p.values[0] < last);
    last = p.values[0];
  }
}

TEST_CASE("softplus endpoints") {
  CHECK(nn::softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(nn::softplus(50.0) - 50.0) / 50.0 < 1e-9);
  CHECK(nn::softplus(-50.0) > 0.0);
  CHECK(nn::softplus(-50.0) ==
        doctest::Approx(std::exp(-50.0)).epsilon(1e-9));
}

TEST_CASE("log_gamma_q against a quadrature oracle") {
  // Q(a, x) = int_x^inf t^{a-1} e^{-t} dt / Gamma(a)
  const Scalar a = 3.2, x = 2.5;
  auto integrand = [&](Scalar t) { return std::pow(t, a - 1.0) * std::exp(-t); };
  auto q = oracles::quad(integrand, x,
                         std::numeric_limits<Scalar>::infinity(), 1e-12);
  const Scalar expect = std::log(q.value) - std::lgamma(a);
  CHECK(nn::log_gamma_q(a, x) == doctest::Approx(expect).epsilon(1e-8));
}

TEST_CASE("log_normal_sf against a quadrature oracle") {
  auto phi = [](Scalar t) {
    return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
  };
  for (Scalar z : {-1.5, 0.0, 2.0}) {
    auto q = oracles::quad(phi, z, std::numeric_limits<Scalar>::infinity(),
                           1e-13);
    CHECK(nn::log_normal_sf(z) ==
          doctest::Approx(std::log(q.value)).epsilon(1e-8));
  }
  // far tail: the oracle's 1e-14 tail cutoff costs relative precision
  auto q = oracles::quad(phi, 6.0, std::numeric_limits<Scalar>::infinity(),
                         1e-15);
  CHECK(nn::log_normal_sf(6.0) ==
        doctest::Approx(std::log(q.value)).epsilon(1e-3));
}

TEST_CASE("checkpoint round-trips bit exactly") {
  Rng rng(5);
  nn::Checkpoint ck;
  ck.metadata["kind"] = "test";
  ck.metadata["note"] = "42";
  ParamTensor w = ParamTensor::matrix("w", 3, 2);
  for (int i = 0; i < w.size(); ++i) w.values[i] = rng.normal();
  ck.tensors.push_back(w);
  const std::string path = "ckpt_roundtrip.bin";
  ck.save(path);
  auto back = nn::Checkpoint::load(path);
  CHECK(back.meta("kind") == "test");
  CHECK(back.meta_num("note") == 42.0);
  REQUIRE(back.has("w"));
  const auto& got = back.get("w");
  REQUIRE(got.size() == w.size());
  for (int i = 0; i < w.size(); ++i) CHECK(got.values[i] == w.values[i]);
  std::remove(path.c_str());
}
