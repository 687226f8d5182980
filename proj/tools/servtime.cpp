// servtime: command-line front end for the queueing toolchain.
//
// Exit codes: 0 success, 2 usage error, 3 invalid config/argument,
// 4 missing file or I/O failure, 5 training diverged (NaN abort),
// 1 any other runtime failure.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "servtime/advserve/model.hpp"
#include "servtime/evalkit/metrics.hpp"
#include "servtime/eventlog/trace.hpp"
#include "servtime/mempool/model.hpp"
#include "servtime/nn/checkpoint.hpp"
#include "servtime/nsx/model.hpp"
#include "servtime/rpp/model.hpp"
#include "servtime/synthsim/synthsim.hpp"

namespace {

using namespace servtime;

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitDiverged = 5;
constexpr int kExitRuntime = 1;

// Loads the event CSV; horizon <= 0 means "end of data" (nothing censored).
eventlog::QueueTrace load_trace(const std::string& path, Scalar horizon) {
  if (horizon > 0.0) return eventlog::ingest_csv(path, horizon);
  eventlog::QueueTrace trace = eventlog::ingest_csv(path, 1e300);
  Scalar h = 0.0;
  for (const auto& ev : trace.events) {
    h = std::max(h, ev.arrival_time);
    if (ev.departure_time) h = std::max(h, *ev.departure_time);
  }
  trace.horizon = h;
  return trace;
}

// Resolved-config copy next to the command's primary output.
void write_resolved_config(CLI::App* sub, const std::string& anchor) {
  const std::string path = anchor + ".resolved.cfg";
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot open " + path + " for writing");
  os << sub->config_to_str(true, false);
}

struct ServicePredictions {
  std::vector<Scalar> observed;             // uncensored test services
  std::vector<Scalar> predicted;            // matching MC means
  std::vector<std::vector<Scalar>> samples; // matching MC draws
  int n_censored = 0;
};

// Index range [n - n_test, n) of the chronological test suffix.
int test_begin(int n, Scalar fraction) {
  int n_test = static_cast<int>(std::llround(fraction * n));
  n_test = std::max(1, std::min(n_test, n - 1));
  return n - n_test;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recurrent queueing toolchain"};
  app.require_subcommand(1);

  // ---- simulate ----
  struct {
    std::string family = "h-pt", out;
    Scalar horizon = 100.0;
    std::uint64_t seed = 1;
  } sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "synthetic G/G/inf trace");
  c_sim->set_config("--config");
  c_sim->allow_config_extras(false);
  c_sim->add_option("--family", sim.family, "h-pt|h-ps|nh-pt|nh-ps");
  c_sim->add_option("--horizon", sim.horizon, "observation window length");
  c_sim->add_option("--seed", sim.seed, "rng seed");
  c_sim->add_option("--out", sim.out, "output event CSV")->required();
  c_sim->callback([&] {
    const auto spec = synthsim::default_dataset_spec(
        synthsim::parse_family(sim.family));
    const auto trace = synthsim::make_dataset(spec, sim.horizon, sim.seed);
    eventlog::write_csv(trace, sim.out);
    write_resolved_config(c_sim, sim.out);
  });

  // ---- simulate-mempool ----
  struct {
    Scalar rate = 10.0, block_rate = 1.0, horizon = 100.0;
    std::uint64_t seed = 1;
    std::string out;
  } smp;
  CLI::App* c_smp =
      app.add_subcommand("simulate-mempool", "synthetic sawtooth backlog");
  c_smp->set_config("--config");
  c_smp->allow_config_extras(false);
  c_smp->add_option("--rate", smp.rate, "backlog growth rate r");
  c_smp->add_option("--block-rate", smp.block_rate, "Poisson block rate q");
  c_smp->add_option("--horizon", smp.horizon, "observation window length");
  c_smp->add_option("--seed", smp.seed, "rng seed");
  c_smp->add_option("--out", smp.out, "output mempool CSV")->required();
  c_smp->callback([&] {
    const auto series =
        mempool::simulate_sawtooth(smp.rate, smp.block_rate, smp.horizon,
                                   smp.seed);
    mempool::write_mempool_csv(series, smp.out);
    write_resolved_config(c_smp, smp.out);
  });

  // ---- ingest ----
  struct {
    std::string data, out;
    Scalar horizon = 0.0;
  } ing;
  CLI::App* c_ing =
      app.add_subcommand("ingest", "validate and canonicalize an event CSV");
  c_ing->set_config("--config");
  c_ing->allow_config_extras(false);
  c_ing->add_option("--data", ing.data, "input event CSV")->required();
  c_ing->add_option("--horizon", ing.horizon, "window T (0 = end of data)");
  c_ing->add_option("--out", ing.out, "output event CSV")->required();
  c_ing->callback([&] {
    eventlog::write_csv(load_trace(ing.data, ing.horizon), ing.out);
    write_resolved_config(c_ing, ing.out);
  });

  // ---- train-rpp ----
  struct {
    std::string data, out;
    Scalar horizon = 0.0, lr = 1e-4;
    int hidden = 16, epochs = 20, window = 64;
    bool tail_survival = false, verbose = false;
    std::uint64_t seed = 1;
  } trpp;
  CLI::App* c_trpp = app.add_subcommand("train-rpp", "fit the arrival model");
  c_trpp->set_config("--config");
  c_trpp->allow_config_extras(false);
  c_trpp->add_option("--data", trpp.data, "event CSV")->required();
  c_trpp->add_option("--horizon", trpp.horizon, "window T (0 = end of data)");
  c_trpp->add_option("--hidden", trpp.hidden, "GRU width");
  c_trpp->add_option("--epochs", trpp.epochs, "training epochs");
  c_trpp->add_option("--lr", trpp.lr, "learning rate");
  c_trpp->add_option("--window", trpp.window, "BPTT truncation window");
  c_trpp->add_flag("--tail-survival", trpp.tail_survival,
                   "include the final open-gap survival term");
  c_trpp->add_flag("--verbose", trpp.verbose, "per-epoch log lines");
  c_trpp->add_option("--seed", trpp.seed, "rng seed");
  c_trpp->add_option("--out", trpp.out, "checkpoint path")->required();
  c_trpp->callback([&] {
    const auto trace = load_trace(trpp.data, trpp.horizon);
    rpp::RppModel model(trpp.hidden, trace.covariate_dim(), trpp.seed);
    rpp::RppConfig cfg;
    cfg.hidden_dim = trpp.hidden;
    cfg.epochs = trpp.epochs;
    cfg.lr = trpp.lr;
    cfg.seed = trpp.seed;
    cfg.bptt_window = trpp.window;
    cfg.include_tail_survival = trpp.tail_survival;
    cfg.verbose = trpp.verbose;
    model.fit({trace}, cfg);
    model.save(trpp.out);
    write_resolved_config(c_trpp, trpp.out);
  });

  // ---- train-ns ----
  struct {
    std::string family = "exponential", rpp, data, out;
    Scalar horizon = 0.0, lr = 1e-4;
    int hidden = 32, epochs = 40, batch = 64;
    bool verbose = false;
    std::uint64_t seed = 1;
  } tns;
  CLI::App* c_tns =
      app.add_subcommand("train-ns", "fit a parametric service model");
  c_tns->set_config("--config");
  c_tns->allow_config_extras(false);
  c_tns->add_option("--family", tns.family,
                    "gamma|exponential|pareto|chi-square|log-normal");
  c_tns->add_option("--rpp", tns.rpp, "frozen arrival checkpoint")->required();
  c_tns->add_option("--data", tns.data, "event CSV")->required();
  c_tns->add_option("--horizon", tns.horizon, "window T (0 = end of data)");
  c_tns->add_option("--hidden", tns.hidden, "MLP width (two hidden layers)");
  c_tns->add_option("--epochs", tns.epochs, "training epochs");
  c_tns->add_option("--lr", tns.lr, "learning rate");
  c_tns->add_option("--batch", tns.batch, "minibatch size");
  c_tns->add_flag("--verbose", tns.verbose, "per-epoch log lines");
  c_tns->add_option("--seed", tns.seed, "rng seed");
  c_tns->add_option("--out", tns.out, "checkpoint path")->required();
  c_tns->callback([&] {
    const auto trace = load_trace(tns.data, tns.horizon);
    const auto arrival = rpp::RppModel::load(tns.rpp);
    const auto data = nsx::build_service_data(arrival, trace);
    const int cond = data.empty() ? 0 : static_cast<int>(data[0].conditioning.size());
    nsx::NsxModel model(nsx::parse_family(tns.family), cond,
                        {tns.hidden, tns.hidden}, tns.seed);
    nsx::NsxConfig cfg;
    cfg.hidden = {tns.hidden, tns.hidden};
    cfg.epochs = tns.epochs;
    cfg.lr = tns.lr;
    cfg.batch_size = tns.batch;
    cfg.seed = tns.seed;
    cfg.verbose = tns.verbose;
    model.fit(data, cfg);
    model.save(tns.out);
    write_resolved_config(c_tns, tns.out);
  });

  // ---- train-adv ----
  struct {
    std::string variant = "as", rpp, data, out;
    Scalar horizon = 0.0, lambda1 = 10.0, lambda2 = 1.0, lambda3 = 1.0,
           lr = 1e-4;
    int critic_steps = 5, noise_dim = 8, gen_hidden = 32, critic_hidden = 32,
        trans_hidden = 16, epochs = 60, batch = 64, unroll = 64;
    bool verbose = false;
    std::uint64_t seed = 1;
  } tadv;
  CLI::App* c_tadv =
      app.add_subcommand("train-adv", "fit an adversarial service model");
  c_tadv->set_config("--config");
  c_tadv->allow_config_extras(false);
  c_tadv->add_option("--variant", tadv.variant, "as|ras|ras-nh");
  c_tadv->add_option("--rpp", tadv.rpp, "frozen arrival checkpoint")
      ->required();
  c_tadv->add_option("--data", tadv.data, "event CSV")->required();
  c_tadv->add_option("--horizon", tadv.horizon, "window T (0 = end of data)");
  c_tadv->add_option("--lambda1", tadv.lambda1, "Lipschitz penalty weight");
  c_tadv->add_option("--lambda2", tadv.lambda2, "censoring penalty weight");
  c_tadv->add_option("--lambda3", tadv.lambda3, "matching penalty weight");
  c_tadv->add_option("--critic-steps", tadv.critic_steps,
                     "critic updates per generator update");
  c_tadv->add_option("--noise-dim", tadv.noise_dim, "noise input width");
  c_tadv->add_option("--gen-hidden", tadv.gen_hidden, "generator width");
  c_tadv->add_option("--critic-hidden", tadv.critic_hidden, "critic width");
  c_tadv->add_option("--trans-hidden", tadv.trans_hidden,
                     "RAS transition LSTM width");
  c_tadv->add_option("--epochs", tadv.epochs, "training epochs");
  c_tadv->add_option("--batch", tadv.batch, "minibatch size");
  c_tadv->add_option("--unroll", tadv.unroll, "RAS truncation window");
  c_tadv->add_option("--lr", tadv.lr, "learning rate");
  c_tadv->add_flag("--verbose", tadv.verbose, "per-epoch log lines");
  c_tadv->add_option("--seed", tadv.seed, "rng seed");
  c_tadv->add_option("--out", tadv.out, "checkpoint path")->required();
  c_tadv->callback([&] {
    const auto trace = load_trace(tadv.data, tadv.horizon);
    const auto arrival = rpp::RppModel::load(tadv.rpp);
    const auto data = advserve::build_adv_data(arrival, trace);
    advserve::AdvConfig cfg;
    cfg.lambda1 = tadv.lambda1;
    cfg.lambda2 = tadv.lambda2;
    cfg.lambda3 = tadv.lambda3;
    cfg.critic_steps_per_gen = tadv.critic_steps;
    cfg.noise_dim = tadv.noise_dim;
    cfg.gen_hidden = tadv.gen_hidden;
    cfg.critic_hidden = tadv.critic_hidden;
    cfg.trans_hidden = tadv.trans_hidden;
    cfg.epochs = tadv.epochs;
    cfg.batch_size = tadv.batch;
    cfg.unroll = tadv.unroll;
    cfg.lr = tadv.lr;
    cfg.seed = tadv.seed;
    cfg.verbose = tadv.verbose;
    advserve::AdvModel model(advserve::parse_variant(tadv.variant),
                             arrival.hidden_dim(), trace.covariate_dim(), cfg,
                             tadv.seed);
    advserve::train_adversarial(model, data, cfg);
    model.save(tadv.out);
    write_resolved_config(c_tadv, tadv.out);
  });

  // ---- train-mempool ----
  struct {
    std::string variant = "nms-g", data, out;
    Scalar lambda1 = 10.0, lambda3 = 1.0, lr = 1e-4;
    int u_hidden = 16, m_hidden = 16, head_hidden = 16, critic_hidden = 16,
        noise_dim = 4, epochs = 30, window = 64, batch = 64, critic_steps = 5;
    bool verbose = false;
    std::uint64_t seed = 1;
  } tmp;
  CLI::App* c_tmp =
      app.add_subcommand("train-mempool", "fit the mempool models");
  c_tmp->set_config("--config");
  c_tmp->allow_config_extras(false);
  c_tmp->add_option("--variant", tmp.variant, "nms-g|ams");
  c_tmp->add_option("--data", tmp.data, "mempool CSV")->required();
  c_tmp->add_option("--u-hidden", tmp.u_hidden, "backlog LSTM width");
  c_tmp->add_option("--m-hidden", tmp.m_hidden, "block LSTM width");
  c_tmp->add_option("--head-hidden", tmp.head_hidden, "emission MLP width");
  c_tmp->add_option("--critic-hidden", tmp.critic_hidden, "critic width");
  c_tmp->add_option("--noise-dim", tmp.noise_dim, "noise input width");
  c_tmp->add_option("--epochs", tmp.epochs, "training epochs");
  c_tmp->add_option("--window", tmp.window, "BPTT truncation window");
  c_tmp->add_option("--batch", tmp.batch, "critic minibatch size");
  c_tmp->add_option("--critic-steps", tmp.critic_steps,
                    "critic updates per generator update");
  c_tmp->add_option("--lambda1", tmp.lambda1, "Lipschitz penalty weight");
  c_tmp->add_option("--lambda3", tmp.lambda3, "matching penalty weight");
  c_tmp->add_option("--lr", tmp.lr, "learning rate");
  c_tmp->add_flag("--verbose", tmp.verbose, "per-epoch log lines");
  c_tmp->add_option("--seed", tmp.seed, "rng seed");
  c_tmp->add_option("--out", tmp.out, "checkpoint path")->required();
  c_tmp->callback([&] {
    const auto series = mempool::ingest_mempool_csv(tmp.data);
    mempool::MempoolConfig cfg;
    cfg.u_hidden = tmp.u_hidden;
    cfg.m_hidden = tmp.m_hidden;
    cfg.head_hidden = tmp.head_hidden;
    cfg.critic_hidden = tmp.critic_hidden;
    cfg.noise_dim = tmp.noise_dim;
    cfg.epochs = tmp.epochs;
    cfg.bptt_window = tmp.window;
    cfg.batch_size = tmp.batch;
    cfg.critic_steps_per_gen = tmp.critic_steps;
    cfg.lambda1 = tmp.lambda1;
    cfg.lambda3 = tmp.lambda3;
    cfg.lr = tmp.lr;
    cfg.seed = tmp.seed;
    cfg.verbose = tmp.verbose;
    const auto model = mempool::train_mempool(
        mempool::parse_mp_variant(tmp.variant), series, cfg);
    model.save(tmp.out);
    write_resolved_config(c_tmp, tmp.out);
  });

  // ---- sample-rpp ----
  struct {
    std::string model, out;
    Scalar horizon = 100.0;
    std::uint64_t seed = 1;
  } srpp;
  CLI::App* c_srpp =
      app.add_subcommand("sample-rpp", "draw an arrival path from a model");
  c_srpp->set_config("--config");
  c_srpp->allow_config_extras(false);
  c_srpp->add_option("--model", srpp.model, "arrival checkpoint")->required();
  c_srpp->add_option("--horizon", srpp.horizon, "sampling horizon");
  c_srpp->add_option("--seed", srpp.seed, "rng seed");
  c_srpp->add_option("--out", srpp.out, "output CSV of arrival times")
      ->required();
  c_srpp->callback([&] {
    const auto model = rpp::RppModel::load(srpp.model);
    const auto arrivals =
        model.sample_path(model.initial_state(), srpp.horizon, srpp.seed);
    std::ofstream os(srpp.out);
    if (!os) throw std::runtime_error("cannot open " + srpp.out);
    os << "arrival_time\n";
    os.precision(17);
    for (Scalar a : arrivals) os << a << "\n";
    write_resolved_config(c_srpp, srpp.out);
  });

  // ---- predict ----
  struct {
    std::string model, rpp, data, out;
    Scalar horizon = 0.0;
    int samples = 100;
    std::uint64_t seed = 1;
  } prd;
  CLI::App* c_prd =
      app.add_subcommand("predict", "per-event Monte Carlo predictions");
  c_prd->set_config("--config");
  c_prd->allow_config_extras(false);
  c_prd->add_option("--model", prd.model, "service/mempool checkpoint")
      ->required();
  c_prd->add_option("--rpp", prd.rpp, "arrival checkpoint (service models)");
  c_prd->add_option("--data", prd.data, "event or mempool CSV")->required();
  c_prd->add_option("--horizon", prd.horizon, "window T (0 = end of data)");
  c_prd->add_option("--samples", prd.samples, "MC draws per event");
  c_prd->add_option("--seed", prd.seed, "rng seed");
  c_prd->add_option("--out", prd.out, "output CSV")->required();
  c_prd->callback([&] {
    const auto ck = nn::Checkpoint::load(prd.model);
    const std::string kind = ck.meta("kind");
    std::ofstream os(prd.out);
    if (!os) throw std::runtime_error("cannot open " + prd.out);
    os.precision(17);
    if (kind == "mempool") {
      const auto model = mempool::MempoolModel::load(prd.model);
      const auto series = mempool::ingest_mempool_csv(prd.data);
      const auto preds =
          model.predict_u_one_step(series, prd.samples, prd.seed);
      os << "block_time,observed_unconfirmed,predicted_unconfirmed\n";
      for (std::size_t i = 0; i < preds.size(); ++i)
        os << series.records[i + 1].block_time << ','
           << series.records[i + 1].unconfirmed << ','
           << std::llround(preds[i]) << "\n";
    } else {
      if (prd.rpp.empty())
        throw std::invalid_argument("predict: --rpp required for " + kind);
      const auto trace = load_trace(prd.data, prd.horizon);
      const auto arrival = rpp::RppModel::load(prd.rpp);
      os << "arrival_time,observed_service,predicted_mean\n";
      if (kind == "nsx") {
        const auto model = nsx::NsxModel::load(prd.model);
        const auto data = nsx::build_service_data(arrival, trace);
        Rng rng(prd.seed);
        for (int i = 0; i < trace.size(); ++i) {
          const auto p =
              model.predict(data[i].conditioning, prd.samples, rng);
          os << trace.events[i].arrival_time << ',';
          if (!data[i].censored) os << data[i].value;
          os << ',' << p.point << "\n";
        }
      } else if (kind == "adv") {
        const auto model = advserve::AdvModel::load(prd.model);
        const auto data = advserve::build_adv_data(arrival, trace);
        const auto mc =
            advserve::predict_mc(model, data, prd.samples, prd.seed);
        for (int i = 0; i < trace.size(); ++i) {
          Scalar mean = 0.0;
          for (Scalar s : mc[i]) mean += s;
          mean /= mc[i].size();
          os << trace.events[i].arrival_time << ',';
          if (!data[i].censored) os << data[i].value;
          os << ',' << mean << "\n";
        }
      } else {
        throw std::invalid_argument("predict: unsupported checkpoint kind " +
                                    kind);
      }
    }
    write_resolved_config(c_prd, prd.out);
  });

  // ---- evaluate ----
  struct {
    std::string model, rpp, data, report, qq;
    Scalar horizon = 0.0, test_fraction = 0.25;
    int samples = 100, quantiles = 50;
    std::uint64_t seed = 1;
  } ev;
  CLI::App* c_ev = app.add_subcommand(
      "evaluate", "held-out error, KS, and Q-Q export on a chronological "
                  "test suffix");
  c_ev->set_config("--config");
  c_ev->allow_config_extras(false);
  c_ev->add_option("--model", ev.model, "service/mempool checkpoint")
      ->required();
  c_ev->add_option("--rpp", ev.rpp, "arrival checkpoint (service models)");
  c_ev->add_option("--data", ev.data, "event or mempool CSV")->required();
  c_ev->add_option("--horizon", ev.horizon, "window T (0 = end of data)");
  c_ev->add_option("--test-fraction", ev.test_fraction,
                   "chronological test suffix fraction");
  c_ev->add_option("--samples", ev.samples, "MC draws per event");
  c_ev->add_option("--quantiles", ev.quantiles, "Q-Q grid size");
  c_ev->add_option("--seed", ev.seed, "rng seed");
  c_ev->add_option("--report", ev.report, "output report JSON")->required();
  c_ev->add_option("--qq", ev.qq, "output Q-Q pair CSV")->required();
  c_ev->callback([&] {
    const auto ck = nn::Checkpoint::load(ev.model);
    const std::string kind = ck.meta("kind");
    evalkit::EvalReport report;
    std::vector<Scalar> observed, predicted, pooled, train_obs;

    if (kind == "mempool") {
      const auto model = mempool::MempoolModel::load(ev.model);
      const auto series = mempool::ingest_mempool_csv(ev.data);
      const auto preds = model.predict_u_one_step(series, ev.samples, ev.seed);
      const auto states = model.u_states(series, ev.seed);
      const int n = static_cast<int>(preds.size());  // targets 1..n
      const int begin = test_begin(n, ev.test_fraction);
      Rng rng(ev.seed + 2);
      for (int i = 0; i < n; ++i) {
        const Scalar target = series.records[i + 1].unconfirmed;
        if (i < begin) {
          train_obs.push_back(target);
        } else {
          observed.push_back(target);
          predicted.push_back(preds[i]);
          for (int k = 0; k < ev.samples; ++k)
            pooled.push_back(model.sample_u(states[i].h, rng));
        }
      }
    } else {
      if (ev.rpp.empty())
        throw std::invalid_argument("evaluate: --rpp required for " + kind);
      const auto trace = load_trace(ev.data, ev.horizon);
      const auto arrival = rpp::RppModel::load(ev.rpp);
      const int begin = test_begin(trace.size(), ev.test_fraction);
      auto add_event = [&](int i, bool censored, Scalar value,
                           Scalar mean, const std::vector<Scalar>& mc) {
        if (i < begin) {
          if (!censored) train_obs.push_back(value);
          return;
        }
        if (censored) {
          ++report.n_censored;
          return;
        }
        observed.push_back(value);
        predicted.push_back(mean);
        pooled.insert(pooled.end(), mc.begin(), mc.end());
      };
      if (kind == "nsx") {
        const auto model = nsx::NsxModel::load(ev.model);
        const auto data = nsx::build_service_data(arrival, trace);
        Rng rng(ev.seed);
        for (int i = 0; i < trace.size(); ++i) {
          const auto p = model.predict(data[i].conditioning, ev.samples, rng);
          add_event(i, data[i].censored, data[i].value, p.point,
                    p.mc_samples);
        }
      } else if (kind == "adv") {
        const auto model = advserve::AdvModel::load(ev.model);
        const auto data = advserve::build_adv_data(arrival, trace);
        const auto mc = advserve::predict_mc(model, data, ev.samples, ev.seed);
        for (int i = 0; i < trace.size(); ++i) {
          Scalar mean = 0.0;
          for (Scalar s : mc[i]) mean += s;
          mean /= mc[i].size();
          add_event(i, data[i].censored, data[i].value, mean, mc[i]);
        }
      } else {
        throw std::invalid_argument(
            "evaluate: unsupported checkpoint kind " + kind);
      }
    }

    if (observed.empty())
      throw std::runtime_error("evaluate: no uncensored test events");
    report.error = evalkit::prediction_error(observed, predicted);
    report.ks = evalkit::ks_two_sample(observed, pooled);
    report.qq_pairs = evalkit::qq_export(observed, pooled, ev.quantiles);
    report.n_events = static_cast<int>(observed.size());
    report.baseline_error =
        train_obs.empty() ? 0.0 : evalkit::mean_baseline(train_obs, observed);
    report.write_json(ev.report);
    report.write_qq_csv(ev.qq);
    write_resolved_config(c_ev, ev.report);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the one-line message
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    if (msg.find("diverged") != std::string::npos) return kExitDiverged;
    if (msg.find("cannot open") != std::string::npos) return kExitIo;
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
