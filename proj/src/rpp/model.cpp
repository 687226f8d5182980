#include "servtime/rpp/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "servtime/nn/checkpoint.hpp"

namespace servtime::rpp {

RppModel::RppModel(int hidden_dim, int cov_dim, std::uint64_t seed)
    : cov_dim_(cov_dim) {
  Rng rng(seed);
  gru_ = nn::GruCell("rpp.gru", 1 + cov_dim, hidden_dim, rng);
  head_v_ = nn::ParamTensor::vector("rpp.head.v", hidden_dim);
  nn::init_uniform(head_v_, hidden_dim, 1, rng);
  head_w_ = nn::ParamTensor::scalar("rpp.head.w");
  head_b_ = nn::ParamTensor::scalar("rpp.head.b");
}

RppModel::State RppModel::initial_state() const {
  return {Vec::Zero(gru_.hidden_dim()), 0.0};
}

Vec RppModel::features(Scalar delta, const Vec& covariates) const {
  Vec f(1 + cov_dim_);
  f[0] = std::log1p(delta / normalizer_.time_scale);
  for (int i = 0; i < cov_dim_; ++i)
    f[1 + i] = (covariates[i] - normalizer_.covariate_means[i]) /
               normalizer_.covariate_stds[i];
  return f;
}

RppModel::State RppModel::advance(const State& s, Scalar delta,
                                  const Vec& covariates,
                                  Scalar arrival_time) const {
  State next;
  next.h = gru_.step_value(features(delta, covariates), s.h);
  next.last_arrival = arrival_time;
  return next;
}

ExpHead RppModel::head(const State& s) const {
  ExpHead h;
  h.alpha = head_v_.values.dot(s.h) + head_b_.values[0];
  h.w = head_w_.values[0];
  return h;
}

ExpectedNext RppModel::expected_next_arrival(const State& s) const {
  ExpectedNext e = expected_next(head(s));
  e.value *= normalizer_.time_scale;
  return e;
}

std::optional<Scalar> RppModel::sample_next(const State& s, Rng& rng) const {
  const auto tau = inverse_cdf_sample(head(s), rng.uniform());
  if (!tau) return std::nullopt;
  return *tau * normalizer_.time_scale;
}

std::vector<Scalar> RppModel::sample_path(const State& start, Scalar horizon,
                                          std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<Scalar> arrivals;
  State s = start;
  const Vec no_cov = Vec::Zero(cov_dim_);
  while (true) {
    const auto delta = sample_next(s, rng);
    if (!delta) break;
    const Scalar t = s.last_arrival + *delta;
    if (t > horizon) break;
    arrivals.push_back(t);
    s = advance(s, *delta, no_cov, t);
  }
  return arrivals;
}

std::vector<Vec> RppModel::hidden_states(
    const eventlog::QueueTrace& trace) const {
  std::vector<Vec> states;
  State s = initial_state();
  Scalar prev = 0.0;
  for (const auto& ev : trace.events) {
    s = advance(s, ev.arrival_time - prev, ev.covariates, ev.arrival_time);
    prev = ev.arrival_time;
    states.push_back(s.h);
  }
  return states;
}

Scalar RppModel::mean_log_likelihood(
    const eventlog::QueueTrace& trace) const {
  if (trace.size() < 2) return 0.0;
  State s = initial_state();
  Scalar prev = 0.0;
  Scalar total = 0.0;
  int n = 0;
  for (int i = 0; i < trace.size(); ++i) {
    const auto& ev = trace.events[i];
    const Scalar delta = ev.arrival_time - prev;
    if (i > 0) {
      total += log_f_star(head(s), delta / normalizer_.time_scale);
      ++n;
    }
    s = advance(s, delta, ev.covariates, ev.arrival_time);
    prev = ev.arrival_time;
  }
  return total / n;
}

std::vector<nn::ParamTensor*> RppModel::params() {
  std::vector<nn::ParamTensor*> out;
  for (auto& p : gru_.params()) out.push_back(&p);
  out.push_back(&head_v_);
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<const nn::ParamTensor*> RppModel::params() const {
  std::vector<const nn::ParamTensor*> out;
  for (const auto& p : gru_.params()) out.push_back(&p);
  out.push_back(&head_v_);
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

void RppModel::fit(const std::vector<eventlog::QueueTrace>& traces,
                   const RppConfig& cfg) {
  // Fit the input normalizer on all training traces pooled.
  {
    Scalar sum = 0.0;
    long n = 0;
    int cov = 0;
    for (const auto& tr : traces) {
      for (Scalar d : eventlog::compute_interarrivals(tr)) {
        sum += d;
        ++n;
      }
      cov = tr.covariate_dim();
    }
    normalizer_.time_scale = n > 0 && sum > 0.0 ? sum / n : 1.0;
    // Covariates pooled over the first trace (single-trace pipelines).
    if (cov > 0 && !traces.empty()) {
      auto nrm = eventlog::fit_normalizer(traces.front());
      normalizer_.covariate_means = nrm.covariate_means;
      normalizer_.covariate_stds = nrm.covariate_stds;
    } else {
      normalizer_.covariate_means = Vec::Zero(cov_dim_);
      normalizer_.covariate_stds = Vec::Ones(cov_dim_);
    }
  }

  nn::Adam::Config acfg;
  acfg.lr = cfg.lr;
  nn::Adam opt(params(), acfg);

  // Snapshot for recovery on divergence.
  auto snapshot = [&]() {
    std::vector<Vec> vals;
    for (auto* p : params()) vals.push_back(p->values);
    return vals;
  };
  auto restore = [&](const std::vector<Vec>& vals) {
    auto ps = params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->values = vals[i];
  };
  std::vector<Vec> last_good = snapshot();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Scalar epoch_ll = 0.0;
    long epoch_terms = 0;
    for (const auto& trace : traces) {
      if (trace.size() < 2)
        throw std::invalid_argument("RppModel::fit: trace needs >= 2 arrivals");
      State s = initial_state();
      Scalar prev = 0.0;
      int i = 0;
      while (i < trace.size() - 1) {
        const int window =
            std::min(cfg.bptt_window, trace.size() - 1 - i);
        nn::Tape t;
        nn::ValueRef v = t.param(head_v_);
        nn::ValueRef w = t.param(head_w_);
        nn::ValueRef b = t.param(head_b_);
        nn::ValueRef h = t.constant(s.h);
        std::vector<nn::ValueRef> terms;
        for (int k = 0; k < window; ++k) {
          const auto& ev = trace.events[i + k];
          const Scalar delta = ev.arrival_time - prev;
          h = gru_.step(t, t.constant(features(delta, ev.covariates)), h);
          prev = ev.arrival_time;
          const Scalar next_delta =
              (trace.events[i + k + 1].arrival_time - prev) /
              normalizer_.time_scale;
          nn::ValueRef alpha = t.add(t.dot(v, h), b);
          terms.push_back(log_f_star_node(t, alpha, w, next_delta));
        }
        if (cfg.include_tail_survival && i + window == trace.size() - 1) {
          // Optional survival term for the gap from the last event to T.
          const Scalar tail = (trace.horizon - prev) / normalizer_.time_scale;
          if (tail > 0.0) {
            nn::ValueRef alpha =
                t.add(t.dot(v, h), b);
            nn::ValueRef integral =
                t.mul(t.exp_(alpha), t.expm1_over_w(w, tail));
            terms.push_back(t.neg(integral));
          }
        }
        nn::ValueRef loss = t.neg(t.mean(t.concat(terms)));
        const Scalar loss_val = t.scalar(loss);
        if (!std::isfinite(loss_val)) {
          restore(last_good);
          throw std::runtime_error("RppModel::fit: loss diverged (NaN); "
                                   "restored last good parameters");
        }
        opt.zero_grad();
        t.backward(loss);
        opt.step();
        epoch_ll += -loss_val * window;
        epoch_terms += window;
        // Carry the state across windows, teacher forced, detached.
        s.h = t.value(h);
        s.last_arrival = prev;
        i += window;
      }
    }
    last_good = snapshot();
    if (cfg.verbose)
      std::cerr << "rpp epoch " << epoch
                << " mean log f* = " << epoch_ll / epoch_terms << "\n";
  }
}

void RppModel::save(const std::string& path) const {
  nn::Checkpoint ck;
  ck.metadata["format"] = "1";
  ck.metadata["kind"] = "rpp";
  ck.metadata["hidden_dim"] = std::to_string(gru_.hidden_dim());
  ck.metadata["cov_dim"] = std::to_string(cov_dim_);
  {
    std::ostringstream ts;
    ts.precision(17);
    ts << normalizer_.time_scale;
    ck.metadata["time_scale"] = ts.str();
  }
  for (const auto* p : params()) ck.tensors.push_back(*p);
  // an unfit normalizer stores empty vectors; persist the identity map
  nn::ParamTensor means = nn::ParamTensor::vector("rpp.norm.means", cov_dim_);
  if (normalizer_.covariate_means.size() == cov_dim_)
    means.values = normalizer_.covariate_means;
  nn::ParamTensor stds = nn::ParamTensor::vector("rpp.norm.stds", cov_dim_);
  if (normalizer_.covariate_stds.size() == cov_dim_)
    stds.values = normalizer_.covariate_stds;
  else
    stds.values.setOnes();
  ck.tensors.push_back(std::move(means));
  ck.tensors.push_back(std::move(stds));
  ck.save(path);
}

RppModel RppModel::load(const std::string& path) {
  nn::Checkpoint ck = nn::Checkpoint::load(path);
  if (ck.meta("kind") != "rpp")
    throw std::runtime_error("RppModel::load: checkpoint kind mismatch");
  RppModel m(std::stoi(ck.meta("hidden_dim")), std::stoi(ck.meta("cov_dim")),
             0);
  ck.restore_into(m.params());
  m.normalizer_.time_scale = ck.meta_num("time_scale");
  m.normalizer_.covariate_means = ck.get("rpp.norm.means").values;
  m.normalizer_.covariate_stds = ck.get("rpp.norm.stds").values;
  return m;
}

}  // namespace servtime::rpp
