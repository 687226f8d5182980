#include "servtime/nsx/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "servtime/nn/adam.hpp"
#include "servtime/nn/checkpoint.hpp"

namespace servtime::nsx {

std::vector<ServiceDatum> build_service_data(
    const rpp::RppModel& arrival, const eventlog::QueueTrace& trace) {
  const auto states = arrival.hidden_states(trace);
  const auto& nrm = arrival.normalizer();
  std::vector<ServiceDatum> data;
  for (int i = 0; i < trace.size(); ++i) {
    const auto& ev = trace.events[i];
    ServiceDatum d;
    d.conditioning.resize(arrival.hidden_dim() + ev.covariates.size());
    d.conditioning.head(arrival.hidden_dim()) = states[i];
    for (int k = 0; k < ev.covariates.size(); ++k)
      d.conditioning[arrival.hidden_dim() + k] =
          (ev.covariates[k] - nrm.covariate_means[k]) / nrm.covariate_stds[k];
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

NsxModel::NsxModel(Family family, int cond_dim,
                   const std::vector<int>& hidden, std::uint64_t seed)
    : family_(family), cond_dim_(cond_dim), hidden_(hidden) {
  Rng rng(seed);
  std::vector<int> dims;
  dims.push_back(cond_dim);
  for (int h : hidden) dims.push_back(h);
  dims.push_back(param_count(family));
  head_ = nn::Mlp("nsx.head", dims, rng);
}

nn::ValueRef NsxModel::loss(nn::Tape& t,
                            const std::vector<ServiceDatum>& batch) const {
  if (batch.empty()) throw std::invalid_argument("NsxModel::loss: empty batch");
  std::vector<nn::ValueRef> terms;
  for (const ServiceDatum& d : batch) {
    nn::ValueRef raw = head_.forward(t, t.constant(d.conditioning));
    nn::ValueRef p = link_params(t, family_, raw, pareto_cap_);
    nn::ValueRef ll = d.censored ? log_survival_node(t, family_, p, d.value)
                                 : log_pdf_node(t, family_, p, d.value);
    terms.push_back(ll);
  }
  return t.neg(t.mean(t.concat(terms)));
}

Scalar NsxModel::loss_value(const std::vector<ServiceDatum>& batch) const {
  nn::Tape t;
  return t.scalar(loss(t, batch));
}

Vec NsxModel::emit_params(const Vec& conditioning) const {
  nn::Tape t;
  nn::ValueRef raw = head_.forward(t, t.constant(conditioning));
  return link_params_value(family_, t.value(raw), pareto_cap_);
}

ServicePrediction NsxModel::predict(const Vec& conditioning, int n_samples,
                                    Rng& rng) const {
  if (n_samples < 1) throw std::invalid_argument("predict: n_samples >= 1");
  ServicePrediction pred;
  pred.params = emit_params(conditioning);
  pred.mc_samples.reserve(n_samples);
  Scalar sum = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Scalar s = sample(family_, pred.params, rng);
    pred.mc_samples.push_back(s);
    sum += s;
  }
  pred.point = sum / n_samples;
  return pred;
}

void NsxModel::fit(const std::vector<ServiceDatum>& data,
                   const NsxConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("NsxModel::fit: no data");
  // Pareto support cap from the uncensored training values.
  Scalar min_s = std::numeric_limits<Scalar>::infinity();
  for (const auto& d : data)
    if (!d.censored) min_s = std::min(min_s, d.value);
  pareto_cap_ = std::isfinite(min_s) && min_s > 0.0 ? 0.9 * min_s : 1.0;

  nn::Adam::Config acfg;
  acfg.lr = cfg.lr;
  nn::Adam opt(params(), acfg);
  Rng rng(cfg.seed);

  auto snapshot = [&]() {
    std::vector<Vec> vals;
    for (auto* p : params()) vals.push_back(p->values);
    return vals;
  };
  std::vector<Vec> last_good = snapshot();

  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Deterministic shuffle from the seeded stream.
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.index(i + 1)]);
    Scalar epoch_loss = 0.0;
    long n_batches = 0;
    for (std::size_t off = 0; off < order.size();
         off += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<ServiceDatum> batch;
      for (std::size_t k = off;
           k < std::min(order.size(), off + cfg.batch_size); ++k)
        batch.push_back(data[order[k]]);
      nn::Tape t;
      nn::ValueRef l = loss(t, batch);
      const Scalar lv = t.scalar(l);
      if (!std::isfinite(lv)) {
        auto ps = params();
        for (std::size_t i = 0; i < ps.size(); ++i)
          ps[i]->values = last_good[i];
        throw std::runtime_error(
            "NsxModel::fit: loss diverged (NaN); restored last good "
            "parameters");
      }
      opt.zero_grad();
      t.backward(l);
      opt.step();
      epoch_loss += lv;
      ++n_batches;
    }
    last_good = snapshot();
    if (cfg.verbose)
      std::cerr << "nsx epoch " << epoch << " loss "
                << epoch_loss / n_batches << "\n";
  }
}

std::vector<nn::ParamTensor*> NsxModel::params() {
  std::vector<nn::ParamTensor*> out;
  for (auto& p : head_.params()) out.push_back(&p);
  return out;
}

void NsxModel::save(const std::string& path) const {
  nn::Checkpoint ck;
  ck.metadata["format"] = "1";
  ck.metadata["kind"] = "nsx";
  ck.metadata["family"] = family_name(family_);
  ck.metadata["cond_dim"] = std::to_string(cond_dim_);
  {
    std::ostringstream hs;
    for (std::size_t i = 0; i < hidden_.size(); ++i)
      hs << (i ? "," : "") << hidden_[i];
    ck.metadata["hidden"] = hs.str();
    std::ostringstream pc;
    pc.precision(17);
    pc << pareto_cap_;
    ck.metadata["pareto_cap"] = pc.str();
  }
  for (const auto& p : head_.params()) ck.tensors.push_back(p);
  ck.save(path);
}

NsxModel NsxModel::load(const std::string& path) {
  nn::Checkpoint ck = nn::Checkpoint::load(path);
  if (ck.meta("kind") != "nsx")
    throw std::runtime_error("NsxModel::load: checkpoint kind mismatch");
  std::vector<int> hidden;
  {
    std::stringstream hs(ck.meta("hidden"));
    std::string tok;
    while (std::getline(hs, tok, ',')) hidden.push_back(std::stoi(tok));
  }
  NsxModel m(parse_family(ck.meta("family")), std::stoi(ck.meta("cond_dim")),
             hidden, 0);
  ck.restore_into(m.params());
  m.pareto_cap_ = ck.meta_num("pareto_cap");
  return m;
}

}  // namespace servtime::nsx
