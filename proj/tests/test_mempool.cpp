#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "oracles.hpp"
#include "servtime/mempool/model.hpp"
#include "servtime/nn/special.hpp"
#include "servtime/rpp/head.hpp"

using namespace servtime;
using namespace servtime::mempool;

namespace {

MempoolConfig small_cfg() {
  MempoolConfig cfg;
  cfg.u_hidden = 4;
  cfg.m_hidden = 4;
  cfg.head_hidden = 5;
  cfg.critic_hidden = 5;
  cfg.noise_dim = 2;
  cfg.epochs = 2;
  cfg.bptt_window = 8;
  return cfg;
}

MempoolSeries tiny_series() {
  MempoolSeries s;
  s.records = {{1.0, 10.0, 4.0}, {2.5, 12.0, 5.0}, {3.0, 9.0, 3.0},
               {4.2, 11.0, 6.0}, {5.0, 8.0, 2.0}};
  s.horizon = 5.0;
  return s;
}

}  // namespace

TEST_CASE("series gap accessors") {
  auto s = tiny_series();
  CHECK(s.inter_block(0) == doctest::Approx(1.0));
  CHECK(s.inter_block(1) == doctest::Approx(1.5));
  CHECK(s.forward_gap(0) == doctest::Approx(1.5));
  CHECK(s.forward_gap(2) == doctest::Approx(1.2));
  s.validate();
}

TEST_CASE("validate rejects unsorted and negative rows") {
  auto s = tiny_series();
  s.records[2].block_time = 10.0;
  CHECK_THROWS(s.validate());
  auto s2 = tiny_series();
  s2.records[1].unconfirmed = -1.0;
  CHECK_THROWS(s2.validate());
}

TEST_CASE("mempool csv round trip") {
  auto s = tiny_series();
  write_mempool_csv(s, "mp_rt.csv");
  auto back = ingest_mempool_csv("mp_rt.csv", s.horizon);
  REQUIRE(back.size() == s.size());
  for (int i = 0; i < s.size(); ++i) {
    CHECK(back.records[i].block_time == doctest::Approx(s.records[i].block_time));
    CHECK(back.records[i].unconfirmed ==
          doctest::Approx(s.records[i].unconfirmed));
    CHECK(back.records[i].accepted == doctest::Approx(s.records[i].accepted));
  }
  std::remove("mp_rt.csv");
}

TEST_CASE("sawtooth simulation keeps the halving invariant") {
  auto s = simulate_sawtooth(5.0, 1.0, 200.0, 3);
  REQUIRE(s.size() > 100);
  for (int i = 0; i < s.size(); ++i) {
    CHECK(s.records[i].accepted ==
          doctest::Approx(0.5 * s.records[i].unconfirmed));
    CHECK(s.records[i].unconfirmed >= 0.0);
  }
  // deterministic rerun
  auto s2 = simulate_sawtooth(5.0, 1.0, 200.0, 3);
  REQUIRE(s2.size() == s.size());
  for (int i = 0; i < s.size(); ++i)
    CHECK(s2.records[i].block_time == s.records[i].block_time);
}

TEST_CASE("zero-weight nms-g head emits softplus(0) gamma params") {
  MempoolModel m(MpVariant::NMS_G, small_cfg(), 4);
  for (auto* p : m.u_params()) p->values.setZero();
  Vec p = m.u_gamma_params(Vec::Ones(m.u_hidden()));
  const Scalar sp0 = nn::softplus(0.0) + 1e-6;
  CHECK(p[0] == doctest::Approx(sp0).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(sp0).epsilon(1e-9));
  // same for any input: constant net
  Vec p2 = m.u_gamma_params(-3.0 * Vec::Ones(m.u_hidden()));
  CHECK(p2[0] == p[0]);
  CHECK(p2[1] == p[1]);
}

TEST_CASE("ams backlog with frozen noise is a deterministic history map") {
  MempoolModel m(MpVariant::AMS, small_cfg(), 5);
  auto s = tiny_series();
  // eps == 0 stream: states depend on the data alone
  auto st1 = m.initial_u_state();
  auto st2 = m.initial_u_state();
  Vec eps = Vec::Zero(m.noise_dim());
  for (int i = 0; i + 1 < s.size(); ++i) {
    st1 = m.step_u(st1, s.forward_gap(i), s.records[i].unconfirmed, eps);
    st2 = m.step_u(st2, s.forward_gap(i), s.records[i].unconfirmed, eps);
  }
  CHECK((st1.h - st2.h).norm() == 0.0);
  // identical rng draws give identical samples
  Rng r1(7), r2(7);
  CHECK(m.sample_u(st1.h, r1) == m.sample_u(st2.h, r2));
}

TEST_CASE("ams samples have variance under random weights") {
  MempoolModel m(MpVariant::AMS, small_cfg(), 6);
  Rng rng(9);
  Vec h = rng.normal_vec(m.u_hidden());
  Scalar mean = 0.0, sq = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Scalar v = m.sample_u(h, rng);
    mean += v;
    sq += v * v;
  }
  mean /= n;
  CHECK(sq / n - mean * mean > 0.0);
}

TEST_CASE("block intensity closed values") {
  MempoolModel m(MpVariant::NMS_G, small_cfg(), 7);
  m.head_vm().values.setZero();
  m.head_vu().values.setZero();
  m.head_w().values.setZero();
  m.head_b().values.setZero();
  Vec hm = Vec::Ones(m.m_hidden()), hu = Vec::Ones(m.u_hidden());
  CHECK(m.block_intensity(hm, hu, 3.0) == 1.0);
  m.head_w().values[0] = 0.5;
  CHECK(m.block_intensity(hm, hu, 2.0) ==
        doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("block head reuses the rpp closed forms exactly") {
  MempoolModel m(MpVariant::NMS_G, small_cfg(), 8);
  Rng rng(3);
  Vec hm = rng.normal_vec(m.m_hidden());
  Vec hu = rng.normal_vec(m.u_hidden());
  auto head = m.block_head(hm, hu);
  CHECK(head.alpha == doctest::Approx(m.block_alpha(hm, hu)).epsilon(1e-15));
  for (Scalar dt : {0.0, 0.7, 2.0}) {
    CHECK(m.block_intensity(hm, hu, dt) ==
          doctest::Approx(rpp::intensity(head, dt)).epsilon(1e-12));
  }
  // rpp invariants hold on this head
  CHECK(rpp::survival(head, 0.0) == 1.0);
  auto q = oracles::quad([&](Scalar t) { return rpp::intensity(head, t); },
                         0.0, 1.5, 1e-11);
  CHECK(rpp::survival(head, 1.5) ==
        doctest::Approx(std::exp(-q.value)).epsilon(1e-8));
}

TEST_CASE("constant accepted head and the backlog clamp") {
  MempoolModel m(MpVariant::NMS_G, small_cfg(), 9);
  for (auto* p : m.accepted_params()) p->values.setZero();
  Vec hm = Vec::Ones(m.m_hidden()), hu = Vec::Ones(m.u_hidden());
  Vec p1 = m.accepted_gamma_params(hm, hu);
  Vec p2 = m.accepted_gamma_params(-2.0 * hm, 0.5 * hu);
  CHECK(p1[0] == p2[0]);
  CHECK(p1[1] == p2[1]);

  Rng rng(11);
  // huge cap: clamp inactive, sample keeps its raw value
  Rng ra(5), rb(5);
  const Scalar free_draw = m.generate_accepted(hm, hu, ra, 1e18);
  const Scalar same_draw = m.generate_accepted(hm, hu, rb, 1e18);
  CHECK(free_draw == same_draw);
  // zero cap: clamp always binds
  for (int i = 0; i < 20; ++i)
    CHECK(m.generate_accepted(hm, hu, rng, 0.25) <= 0.25);
}

TEST_CASE("nms-g backlog objective gradients match finite differences") {
  MempoolModel m(MpVariant::NMS_G, small_cfg(), 12);
  auto s = tiny_series();
  m.fit_scales(s);
  auto params = m.u_params();
  const Vec h0 = Vec::Zero(m.u_hidden()), c0 = Vec::Zero(m.u_hidden());
  auto eval = [&]() {
    nn::Tape t;
    return t.scalar(nmsg_u_loss_node(t, m, s, h0, c0, 0, s.size() - 1));
  };
  auto fd = oracles::fd_grad(eval, params);
  for (auto* p : params) p->zero_grad();
  nn::Tape t;
  t.backward(nmsg_u_loss_node(t, m, s, h0, c0, 0, s.size() - 1));
  CHECK(oracles::max_rel_err(fd, params) < 1e-4);
}

TEST_CASE("block objective gradients match finite differences") {
  MempoolModel m(MpVariant::NMS_G, small_cfg(), 13);
  auto s = tiny_series();
  m.fit_scales(s);
  auto h_u = m.u_states(s, 1);
  auto params = m.block_params();
  const Vec h0 = Vec::Zero(m.m_hidden()), c0 = Vec::Zero(m.m_hidden());
  auto eval = [&]() {
    nn::Tape t;
    return t.scalar(block_loss_node(t, m, s, h_u, h0, c0, 0, s.size() - 1));
  };
  auto fd = oracles::fd_grad(eval, params);
  for (auto* p : params) p->zero_grad();
  nn::Tape t;
  t.backward(block_loss_node(t, m, s, h_u, h0, c0, 0, s.size() - 1));
  CHECK(oracles::max_rel_err(fd, params) < 1e-4);
}

TEST_CASE("accepted objective gradients match finite differences") {
  MempoolModel m(MpVariant::NMS_G, small_cfg(), 14);
  auto s = tiny_series();
  m.fit_scales(s);
  auto h_u = m.u_states(s, 1);
  auto h_m = m.m_states(s);
  auto params = m.accepted_params();
  auto eval = [&]() {
    nn::Tape t;
    return t.scalar(
        nmsg_accepted_loss_node(t, m, s, h_m, h_u, 0, s.size() - 1));
  };
  auto fd = oracles::fd_grad(eval, params);
  for (auto* p : params) p->zero_grad();
  nn::Tape t;
  t.backward(nmsg_accepted_loss_node(t, m, s, h_m, h_u, 0, s.size() - 1));
  CHECK(oracles::max_rel_err(fd, params) < 1e-4);
}

TEST_CASE("ams generator objectives match finite differences") {
  MempoolConfig cfg = small_cfg();
  MempoolModel m(MpVariant::AMS, cfg, 15);
  auto s = tiny_series();
  m.fit_scales(s);
  Rng init(2);
  nn::Mlp critic("crit", {2, 4, 4, 1}, init);
  auto params = m.u_params();
  const Vec h0 = Vec::Zero(m.u_hidden()), c0 = Vec::Zero(m.u_hidden());
  auto eval = [&]() {
    nn::Tape t;
    Rng rng(77);
    return t.scalar(ams_u_gen_loss_node(t, m, critic, s, h0, c0, 0,
                                        s.size() - 1, cfg.lambda3, rng));
  };
  auto fd = oracles::fd_grad(eval, params);
  for (auto* p : params) p->zero_grad();
  {
    nn::Tape t;
    Rng rng(77);
    t.backward(ams_u_gen_loss_node(t, m, critic, s, h0, c0, 0, s.size() - 1,
                                   cfg.lambda3, rng));
  }
  for (auto& p : critic.params()) p.zero_grad();
  CHECK(oracles::max_rel_err(fd, params) < 1e-4);
}

TEST_CASE("mempool critic objective matches finite differences") {
  Rng init(3);
  nn::Mlp critic("crit", {2, 4, 4, 1}, init);
  std::vector<CondSample> real, fake;
  Rng data(4);
  for (int i = 0; i < 4; ++i) {
    real.push_back({data.uniform(0.5, 2.0), data.normal_vec(1)});
    fake.push_back({data.uniform(0.2, 1.0), data.normal_vec(1)});
  }
  std::vector<nn::ParamTensor*> params;
  for (auto& p : critic.params()) params.push_back(&p);
  auto eval = [&]() {
    nn::Tape t;
    Rng rng(88);
    return t.scalar(mp_critic_loss_node(t, critic, real, fake, 10.0, rng));
  };
  auto fd = oracles::fd_grad(eval, params);
  for (auto* p : params) p->zero_grad();
  {
    nn::Tape t;
    Rng rng(88);
    t.backward(mp_critic_loss_node(t, critic, real, fake, 10.0, rng));
  }
  CHECK(oracles::max_rel_err(fd, params) < 1e-4);
}

TEST_CASE("nms-g on a constant series learns the constant") {
  MempoolSeries s;
  Rng rng(5);
  Scalar t = 0.0;
  for (int i = 0; i < 300; ++i) {
    t += rng.exponential(1.0);
    s.records.push_back({t, 50.0, 10.0});
  }
  s.horizon = t;
  MempoolConfig cfg = small_cfg();
  cfg.epochs = 120;
  cfg.lr = 5e-3;
  auto m = train_mempool(MpVariant::NMS_G, s, cfg);
  auto preds = m.predict_u_one_step(s, 1, 1);
  Scalar mean = 0.0;
  for (Scalar p : preds) mean += p;
  mean /= preds.size();
  CHECK(std::abs(mean - 50.0) / 50.0 < 0.05);
}

TEST_CASE("block rpp recovers the poisson inter-block mean") {
  auto s = simulate_sawtooth(5.0, 2.0, 600.0, 6);
  MempoolConfig cfg = small_cfg();
  cfg.epochs = 300;
  cfg.lr = 1e-2;
  auto m = train_mempool(MpVariant::NMS_G, s, cfg);
  // average expected inter-block gap over teacher-forced states
  auto hu = m.u_states(s, 1);
  auto hm = m.m_states(s);
  Scalar acc = 0.0;
  int n = 0;
  for (int i = 0; i + 1 < s.size(); ++i) {
    auto head = m.block_head(hm[i].h, hu[i].h);
    auto en = rpp::expected_next(head);
    if (!en.defective) {
      acc += en.value * m.tau_scale();
      ++n;
    }
  }
  REQUIRE(n > s.size() / 2);
  CHECK(std::abs(acc / n - 0.5) / 0.5 < 0.1);
}

TEST_CASE("nms-g loss decreases monotonically over ten epochs at 1e-5") {
  auto s = simulate_sawtooth(5.0, 1.0, 200.0, 7);
  MempoolConfig cfg = small_cfg();
  cfg.lr = 1e-5;
  std::vector<Scalar> losses;
  for (int epochs = 1; epochs <= 10; ++epochs) {
    MempoolConfig c = cfg;
    c.epochs = epochs;
    auto m = train_mempool(MpVariant::NMS_G, s, c);
    // full-series backlog NLL at the trained parameters
    nn::Tape t;
    auto h0 = m.initial_u_state();
    losses.push_back(t.scalar(
        nmsg_u_loss_node(t, m, s, h0.h, h0.c, 0, s.size() - 1)));
  }
  for (std::size_t i = 1; i < losses.size(); ++i)
    CHECK(losses[i] <= losses[i - 1] + 1e-12);
}

TEST_CASE("training is seed deterministic") {
  auto s = simulate_sawtooth(4.0, 1.0, 120.0, 8);
  MempoolConfig cfg = small_cfg();
  cfg.epochs = 3;
  auto a = train_mempool(MpVariant::AMS, s, cfg);
  auto b = train_mempool(MpVariant::AMS, s, cfg);
  auto pa = a.params();
  auto pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i]->values - pb[i]->values).norm() == 0.0);
}

TEST_CASE("variant names round trip") {
  CHECK(parse_mp_variant(mp_variant_name(MpVariant::NMS_G)) ==
        MpVariant::NMS_G);
  CHECK(parse_mp_variant(mp_variant_name(MpVariant::AMS)) == MpVariant::AMS);
  CHECK_THROWS(parse_mp_variant("bogus"));
}

TEST_CASE("model save/load round trip") {
  MempoolModel m(MpVariant::AMS, small_cfg(), 16);
  m.set_scales(3.0, 1.5, 0.7);
  m.save("mp_rt.ckpt");
  auto back = MempoolModel::load("mp_rt.ckpt");
  CHECK(back.variant() == MpVariant::AMS);
  CHECK(back.u_scale() == doctest::Approx(3.0));
  CHECK(back.b_scale() == doctest::Approx(1.5));
  CHECK(back.tau_scale() == doctest::Approx(0.7));
  auto pa = m.params();
  auto pb = back.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i]->values - pb[i]->values).norm() == 0.0);
  std::remove("mp_rt.ckpt");
}
