#include "servtime/advserve/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "servtime/nn/adam.hpp"
#include "servtime/nn/checkpoint.hpp"
#include "servtime/nn/special.hpp"

namespace servtime::advserve {

Variant parse_variant(const std::string& name) {
  if (name == "as") return Variant::AS;
  if (name == "ras") return Variant::RAS;
  if (name == "ras-nh" || name == "ras_nh") return Variant::RAS_NH;
  throw std::invalid_argument("unknown adversarial variant: " + name);
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::AS: return "as";
    case Variant::RAS: return "ras";
    case Variant::RAS_NH: return "ras-nh";
  }
  return "?";
}

std::vector<AdvDatum> build_adv_data(const rpp::RppModel& arrival,
                                     const eventlog::QueueTrace& trace) {
  const auto states = arrival.hidden_states(trace);
  const auto& nrm = arrival.normalizer();
  std::vector<AdvDatum> data;
  for (int i = 0; i < trace.size(); ++i) {
    const auto& ev = trace.events[i];
    AdvDatum d;
    d.h_a = states[i];
    d.x.resize(ev.covariates.size());
    for (int k = 0; k < ev.covariates.size(); ++k)
      d.x[k] = (ev.covariates[k] - nrm.covariate_means[k]) /
               nrm.covariate_stds[k];
    if (ev.departure_time) {
      d.value = *ev.departure_time - ev.arrival_time;
      d.censored = false;
    } else {
      d.value = trace.horizon - ev.arrival_time;
      d.censored = true;
    }
    data.push_back(std::move(d));
  }
  return data;
}

AdvModel::AdvModel(Variant variant, int arrival_hidden, int cov_dim,
                   const AdvConfig& cfg, std::uint64_t seed)
    : variant_(variant),
      arrival_hidden_(arrival_hidden),
      cov_dim_(cov_dim),
      noise_dim_(cfg.noise_dim) {
  Rng rng(seed);
  const int g = cfg.gen_hidden;
  const int c = cfg.critic_hidden;
  if (variant == Variant::AS) {
    gen_dims_ = {arrival_hidden + cov_dim + noise_dim_, g, g, g, 1};
  } else {
    const int trans_in =
        noise_dim_ + cov_dim + (variant == Variant::RAS ? arrival_hidden : 0);
    trans_ = nn::LstmCell("adv.trans", std::max(trans_in, 1),
                          cfg.trans_hidden, rng);
    gen_dims_ = {cfg.trans_hidden + noise_dim_, g, g, g, 1};
  }
  gen_ = nn::Mlp("adv.gen", gen_dims_, rng);
  critic_dims_ = {1 + cov_dim, c, c, c, 1};
  critic_ = nn::Mlp("adv.critic", critic_dims_, rng);
}

Vec AdvModel::trans_input(const AdvDatum& d, const Vec& eps) const {
  const bool use_ha = variant_ == Variant::RAS;
  const int n = noise_dim_ + (use_ha ? arrival_hidden_ : 0) + cov_dim_;
  Vec in(std::max(n, 1));
  in.setZero();
  int off = 0;
  in.segment(0, noise_dim_) = eps;
  off += noise_dim_;
  if (use_ha) {
    in.segment(off, arrival_hidden_) = d.h_a;
    off += arrival_hidden_;
  }
  if (cov_dim_ > 0) in.segment(off, cov_dim_) = d.x;
  return in;
}

nn::ValueRef AdvModel::generate_node(nn::Tape& t, const AdvDatum& d, Rng& rng,
                                     bool with_noise) const {
  if (variant_ != Variant::AS)
    throw std::logic_error("generate_node: AS only; use the recurrent path");
  Vec in(arrival_hidden_ + cov_dim_ + noise_dim_);
  in.head(arrival_hidden_) = d.h_a;
  if (cov_dim_ > 0) in.segment(arrival_hidden_, cov_dim_) = d.x;
  if (noise_dim_ > 0)
    in.tail(noise_dim_) = with_noise ? rng.normal_vec(noise_dim_)
                                     : Vec::Zero(noise_dim_);
  std::vector<Vec> layer_noise;
  if (with_noise) layer_noise = gen_.draw_noise(rng);
  nn::ValueRef raw = gen_.forward(t, t.constant(in),
                                  with_noise ? &layer_noise : nullptr);
  return t.softplus_(raw);
}

Scalar AdvModel::generate_value(const AdvDatum& d, Rng& rng,
                                bool with_noise) const {
  nn::Tape t;
  return t.scalar(generate_node(t, d, rng, with_noise));
}

AdvModel::TransState AdvModel::initial_trans_state(nn::Tape& t) const {
  return {t.zeros(trans_.hidden_dim()), t.zeros(trans_.hidden_dim())};
}

std::pair<nn::ValueRef, AdvModel::TransState>
AdvModel::generate_node_recurrent(nn::Tape& t, const AdvDatum& d,
                                  TransState prev, Rng& rng,
                                  bool with_noise) const {
  if (variant_ == Variant::AS)
    throw std::logic_error("generate_node_recurrent: RAS variants only");
  const Vec eps = with_noise && noise_dim_ > 0 ? rng.normal_vec(noise_dim_)
                                               : Vec::Zero(noise_dim_);
  nn::LstmCell::State s =
      trans_.step(t, t.constant(trans_input(d, eps)), {prev.h, prev.c});
  const Vec eps2 = with_noise && noise_dim_ > 0 ? rng.normal_vec(noise_dim_)
                                                : Vec::Zero(noise_dim_);
  nn::ValueRef in =
      noise_dim_ > 0 ? t.concat({s.h, t.constant(eps2)}) : s.h;
  std::vector<Vec> layer_noise;
  if (with_noise) layer_noise = gen_.draw_noise(rng);
  nn::ValueRef raw =
      gen_.forward(t, in, with_noise ? &layer_noise : nullptr);
  return {t.softplus_(raw), TransState{s.h, s.c}};
}

std::tuple<Scalar, Vec, Vec> AdvModel::generate_value_recurrent(
    const AdvDatum& d, const Vec& h_prev, const Vec& c_prev, Rng& rng,
    bool with_noise) const {
  const Vec eps = with_noise && noise_dim_ > 0 ? rng.normal_vec(noise_dim_)
                                               : Vec::Zero(noise_dim_);
  auto [h, c] = trans_.step_value(trans_input(d, eps), h_prev, c_prev);
  const Vec eps2 = with_noise && noise_dim_ > 0 ? rng.normal_vec(noise_dim_)
                                                : Vec::Zero(noise_dim_);
  Vec in(trans_.hidden_dim() + noise_dim_);
  in.head(trans_.hidden_dim()) = h;
  if (noise_dim_ > 0) in.tail(noise_dim_) = eps2;
  std::vector<Vec> layer_noise;
  if (with_noise) layer_noise = gen_.draw_noise(rng);
  const Vec raw = gen_.forward_value(in, with_noise ? &layer_noise : nullptr);
  return {nn::softplus(raw[0]), h, c};
}

nn::ValueRef AdvModel::critic_node(nn::Tape& t, nn::ValueRef s,
                                   const Vec& x) const {
  nn::ValueRef in =
      cov_dim_ > 0 ? t.concat({s, t.constant(x)}) : s;
  return critic_.forward(t, in);
}

nn::Mlp::WithGrad AdvModel::critic_with_grad(nn::Tape& t, nn::ValueRef s,
                                             const Vec& x) const {
  nn::ValueRef in =
      cov_dim_ > 0 ? t.concat({s, t.constant(x)}) : s;
  return critic_.forward_with_input_grad(t, in, 0);
}

Scalar AdvModel::critic_value(Scalar s, const Vec& x) const {
  nn::Tape t;
  return t.scalar(critic_node(t, t.constant(s), x));
}

std::vector<nn::ParamTensor*> AdvModel::gen_params() {
  std::vector<nn::ParamTensor*> out;
  for (auto& p : gen_.params()) out.push_back(&p);
  if (variant_ != Variant::AS)
    for (auto& p : trans_.params()) out.push_back(&p);
  return out;
}

std::vector<nn::ParamTensor*> AdvModel::critic_params() {
  std::vector<nn::ParamTensor*> out;
  for (auto& p : critic_.params()) out.push_back(&p);
  return out;
}

Scalar wasserstein_loss(const AdvModel& m,
                        const std::vector<CriticSample>& real,
                        const std::vector<CriticSample>& fake) {
  if (real.empty() || fake.empty())
    throw std::invalid_argument("wasserstein_loss: empty batch");
  Scalar mr = 0.0, mf = 0.0;
  for (const auto& r : real) mr += m.critic_value(r.s, r.x);
  for (const auto& f : fake) mf += m.critic_value(f.s, f.x);
  return mr / real.size() - mf / fake.size();
}

nn::ValueRef lipschitz_penalty_node(nn::Tape& t, const AdvModel& m,
                                    const std::vector<CriticSample>& real,
                                    const std::vector<CriticSample>& fake,
                                    Rng& rng) {
  if (real.empty() || fake.empty())
    throw std::invalid_argument("lipschitz_penalty: empty batch");
  const int n = static_cast<int>(std::min(real.size(), fake.size()));
  std::vector<nn::ValueRef> terms;
  for (int i = 0; i < n; ++i) {
    const CriticSample& r = real[rng.index(static_cast<int>(real.size()))];
    const CriticSample& f = fake[rng.index(static_cast<int>(fake.size()))];
    const Scalar u = rng.uniform();
    const Scalar s_hat = u * r.s + (1.0 - u) * f.s;
    auto wg = m.critic_with_grad(t, t.constant(s_hat), r.x);
    // one-sided: (max{0, |df/ds| - 1})^2
    nn::ValueRef excess = t.relu_(t.affine(t.abs_(wg.din_coord), 1.0, -1.0));
    terms.push_back(t.square_(excess));
  }
  return t.mean(t.concat(terms));
}

Scalar lipschitz_penalty(const AdvModel& m,
                         const std::vector<CriticSample>& real,
                         const std::vector<CriticSample>& fake,
                         std::uint64_t seed) {
  nn::Tape t;
  Rng rng(seed);
  return t.scalar(lipschitz_penalty_node(t, m, real, fake, rng));
}

Scalar censor_penalty(const AdvModel& m, const std::vector<AdvDatum>& censored,
                      std::uint64_t seed) {
  if (censored.empty()) return 0.0;
  Rng rng(seed);
  Scalar acc = 0.0;
  if (m.variant() == Variant::AS) {
    for (const auto& d : censored)
      acc += std::max(0.0, d.value - m.generate_value(d, rng));
  } else {
    Vec h = Vec::Zero(m.trans_hidden()), c = Vec::Zero(m.trans_hidden());
    for (const auto& d : censored) {
      auto [s, hn, cn] = m.generate_value_recurrent(d, h, c, rng);
      h = hn;
      c = cn;
      acc += std::max(0.0, d.value - s);
    }
  }
  return acc / censored.size();
}

Scalar match_penalty(const AdvModel& m,
                     const std::vector<AdvDatum>& uncensored,
                     std::uint64_t seed) {
  if (uncensored.empty()) return 0.0;
  Rng rng(seed);
  Scalar acc = 0.0;
  if (m.variant() == Variant::AS) {
    for (const auto& d : uncensored)
      acc += std::abs(d.value - m.generate_value(d, rng));
  } else {
    Vec h = Vec::Zero(m.trans_hidden()), c = Vec::Zero(m.trans_hidden());
    for (const auto& d : uncensored) {
      auto [s, hn, cn] = m.generate_value_recurrent(d, h, c, rng);
      h = hn;
      c = cn;
      acc += std::abs(d.value - s);
    }
  }
  return acc / uncensored.size();
}

namespace {

struct Snapshot {
  std::vector<Vec> vals;
};

Snapshot take_snapshot(AdvModel& m) {
  Snapshot s;
  for (auto* p : m.gen_params()) s.vals.push_back(p->values);
  for (auto* p : m.critic_params()) s.vals.push_back(p->values);
  return s;
}

void restore_snapshot(AdvModel& m, const Snapshot& s) {
  std::size_t i = 0;
  for (auto* p : m.gen_params()) p->values = s.vals[i++];
  for (auto* p : m.critic_params()) p->values = s.vals[i++];
}

}  // namespace

void train_adversarial(AdvModel& model, const std::vector<AdvDatum>& data,
                       const AdvConfig& cfg) {
  std::vector<int> unc_idx, cen_idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    (data[i].censored ? cen_idx : unc_idx).push_back(static_cast<int>(i));
  if (unc_idx.empty())
    throw std::invalid_argument("train_adversarial: no uncensored events");

  nn::Adam::Config acfg;
  acfg.lr = cfg.lr;
  // Momentum-free first moment: with beta1 = 0.9 the critic keeps chasing
  // its own stale direction and the minimax estimate oscillates.
  acfg.beta1 = 0.0;
  acfg.beta2 = 0.9;
  nn::Adam opt_gen(model.gen_params(), acfg);
  nn::Adam opt_critic(model.critic_params(), acfg);
  Rng rng(cfg.seed);
  Snapshot last_good = take_snapshot(model);

  const int n = static_cast<int>(data.size());
  const int steps_per_epoch =
      std::max(1, static_cast<int>(unc_idx.size()) / cfg.batch_size);
  const bool recurrent = model.variant() != Variant::AS;
  const int unroll = std::min(cfg.unroll, n);

  auto check_finite = [&](Scalar v, const char* what) {
    if (!std::isfinite(v)) {
      restore_snapshot(model, last_good);
      throw std::runtime_error(std::string("train_adversarial: ") + what +
                               " diverged (NaN); restored last good "
                               "parameters");
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Scalar last_w = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      // --- critic updates ---
      for (int k = 0; k < cfg.critic_steps_per_gen; ++k) {
        std::vector<CriticSample> real, fake;
        if (!recurrent) {
          for (int b = 0; b < cfg.batch_size; ++b) {
            const AdvDatum& d =
                data[unc_idx[rng.index(static_cast<int>(unc_idx.size()))]];
            real.push_back({d.value, d.x});
            fake.push_back({model.generate_value(d, rng), d.x});
          }
        } else {
          // Fakes from a fresh trajectory window; reals from the window's
          // uncensored events. The state is warmed from the sequence start
          // so a truncated window keeps its place in the trajectory.
          const int start = n > unroll ? rng.index(n - unroll) : 0;
          Vec h = Vec::Zero(model.trans_hidden());
          Vec c = Vec::Zero(model.trans_hidden());
          for (int j = 0; j < start; ++j) {
            auto [s, hn, cn] = model.generate_value_recurrent(data[j], h, c, rng);
            h = hn;
            c = cn;
          }
          for (int j = start; j < std::min(n, start + unroll); ++j) {
            auto [s, hn, cn] = model.generate_value_recurrent(data[j], h, c, rng);
            h = hn;
            c = cn;
            if (!data[j].censored) {
              fake.push_back({s, data[j].x});
              real.push_back({data[j].value, data[j].x});
            }
          }
          if (real.empty()) {
            const AdvDatum& d =
                data[unc_idx[rng.index(static_cast<int>(unc_idx.size()))]];
            real.push_back({d.value, d.x});
            fake.push_back({d.value, d.x});
          }
        }
        nn::Tape t;
        std::vector<nn::ValueRef> fr, ff;
        for (const auto& r : real)
          fr.push_back(model.critic_node(t, t.constant(r.s), r.x));
        for (const auto& f : fake)
          ff.push_back(model.critic_node(t, t.constant(f.s), f.x));
        nn::ValueRef w = t.sub(t.mean(t.concat(fr)), t.mean(t.concat(ff)));
        nn::ValueRef l1 = lipschitz_penalty_node(t, model, real, fake, rng);
        nn::ValueRef loss = t.add(t.neg(w), t.scale(l1, cfg.lambda1));
        check_finite(t.scalar(loss), "critic loss");
        if (t.scalar(l1) > 1e3)
          std::cerr << "train_adversarial: warning: critic penalty > 1e3 "
                       "(possible collapse)\n";
        opt_critic.zero_grad();
        // The generator contributed values only (no tape), so only critic
        // params receive gradients here.
        t.backward(loss);
        opt_critic.step();
        last_w = t.scalar(w);
      }

      // --- one generator update ---
      nn::Tape t;
      std::vector<nn::ValueRef> f_terms, match_terms, censor_terms;
      if (!recurrent) {
        for (int b = 0; b < cfg.batch_size; ++b) {
          const AdvDatum& d =
              data[unc_idx[rng.index(static_cast<int>(unc_idx.size()))]];
          nn::ValueRef s = model.generate_node(t, d, rng);
          f_terms.push_back(model.critic_node(t, s, d.x));
          match_terms.push_back(t.abs_(t.affine(s, -1.0, d.value)));
        }
        const int n_cen = std::min<int>(cfg.batch_size,
                                        static_cast<int>(cen_idx.size()));
        for (int b = 0; b < n_cen; ++b) {
          const AdvDatum& d =
              data[cen_idx[rng.index(static_cast<int>(cen_idx.size()))]];
          nn::ValueRef s = model.generate_node(t, d, rng);
          censor_terms.push_back(t.relu_(t.affine(s, -1.0, d.value)));
        }
      } else {
        const int start = n > unroll ? rng.index(n - unroll) : 0;
        // value-level warm-up to the window start; gradients are truncated
        // there but the state keeps its trajectory phase
        Vec h = Vec::Zero(model.trans_hidden());
        Vec c = Vec::Zero(model.trans_hidden());
        for (int j = 0; j < start; ++j) {
          auto [s, hn, cn] = model.generate_value_recurrent(data[j], h, c, rng);
          h = hn;
          c = cn;
        }
        AdvModel::TransState st{t.constant(h), t.constant(c)};
        for (int j = start; j < std::min(n, start + unroll); ++j) {
          auto [s, st_next] = model.generate_node_recurrent(t, data[j], st, rng);
          st = st_next;
          if (data[j].censored) {
            censor_terms.push_back(t.relu_(t.affine(s, -1.0, data[j].value)));
          } else {
            f_terms.push_back(model.critic_node(t, s, data[j].x));
            match_terms.push_back(t.abs_(t.affine(s, -1.0, data[j].value)));
          }
        }
      }
      if (f_terms.empty()) continue;
      nn::ValueRef loss = t.neg(t.mean(t.concat(f_terms)));
      if (!censor_terms.empty())
        loss = t.add(loss, t.scale(t.mean(t.concat(censor_terms)), cfg.lambda2));
      if (!match_terms.empty())
        loss = t.add(loss, t.scale(t.mean(t.concat(match_terms)), cfg.lambda3));
      check_finite(t.scalar(loss), "generator loss");
      opt_gen.zero_grad();
      opt_critic.zero_grad();  // discard critic grads from this pass
      t.backward(loss);
      opt_gen.step();
    }
    last_good = take_snapshot(model);
    if (cfg.verbose)
      std::cerr << "adv epoch " << epoch << " wasserstein " << last_w << "\n";
  }
}

std::vector<std::vector<Scalar>> predict_mc(const AdvModel& model,
                                            const std::vector<AdvDatum>& data,
                                            int n_samples,
                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<Scalar>> out(data.size());
  for (auto& v : out) v.reserve(n_samples);
  if (model.variant() == Variant::AS) {
    for (std::size_t i = 0; i < data.size(); ++i)
      for (int k = 0; k < n_samples; ++k)
        out[i].push_back(model.generate_value(data[i], rng));
  } else {
    for (int k = 0; k < n_samples; ++k) {
      Vec h = Vec::Zero(model.trans_hidden());
      Vec c = Vec::Zero(model.trans_hidden());
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto [s, hn, cn] = model.generate_value_recurrent(data[i], h, c, rng);
        h = hn;
        c = cn;
        out[i].push_back(s);
      }
    }
  }
  return out;
}

void AdvModel::save(const std::string& path) const {
  nn::Checkpoint ck;
  ck.metadata["format"] = "1";
  ck.metadata["kind"] = "adv";
  ck.metadata["variant"] = variant_name(variant_);
  ck.metadata["arrival_hidden"] = std::to_string(arrival_hidden_);
  ck.metadata["cov_dim"] = std::to_string(cov_dim_);
  ck.metadata["noise_dim"] = std::to_string(noise_dim_);
  ck.metadata["gen_hidden"] = std::to_string(gen_dims_[1]);
  ck.metadata["critic_hidden"] = std::to_string(critic_dims_[1]);
  ck.metadata["trans_hidden"] =
      std::to_string(variant_ == Variant::AS ? 0 : trans_.hidden_dim());
  for (const auto& p : gen_.params()) ck.tensors.push_back(p);
  for (const auto& p : critic_.params()) ck.tensors.push_back(p);
  if (variant_ != Variant::AS)
    for (const auto& p : trans_.params()) ck.tensors.push_back(p);
  ck.save(path);
}

AdvModel AdvModel::load(const std::string& path) {
  nn::Checkpoint ck = nn::Checkpoint::load(path);
  if (ck.meta("kind") != "adv")
    throw std::runtime_error("AdvModel::load: checkpoint kind mismatch");
  AdvConfig cfg;
  cfg.noise_dim = std::stoi(ck.meta("noise_dim"));
  cfg.gen_hidden = std::stoi(ck.meta("gen_hidden"));
  cfg.critic_hidden = std::stoi(ck.meta("critic_hidden"));
  const int th = std::stoi(ck.meta("trans_hidden"));
  if (th > 0) cfg.trans_hidden = th;
  AdvModel m(parse_variant(ck.meta("variant")),
             std::stoi(ck.meta("arrival_hidden")),
             std::stoi(ck.meta("cov_dim")), cfg, 0);
  std::vector<nn::ParamTensor*> all = m.gen_params();
  for (auto* p : m.critic_params()) all.push_back(p);
  ck.restore_into(all);
  return m;
}

}  // namespace servtime::advserve
