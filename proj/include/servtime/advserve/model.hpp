#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "servtime/eventlog/trace.hpp"
#include "servtime/nn/layers.hpp"
#include "servtime/rpp/model.hpp"

namespace servtime::advserve {

enum class Variant { AS, RAS, RAS_NH };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct AdvConfig {
  Scalar lambda1 = 10.0;  // Lipschitz penalty weight
  Scalar lambda2 = 1.0;   // censoring penalty weight (dataset dependent)
  Scalar lambda3 = 1.0;   // matching penalty weight
  int critic_steps_per_gen = 5;
  int noise_dim = 8;
  int gen_hidden = 32;     // 3 hidden layers of this width
  int critic_hidden = 32;
  int trans_hidden = 16;   // RAS transition LSTM width
  int epochs = 60;
  int batch_size = 64;
  int unroll = 64;         // RAS truncation window
  Scalar lr = 1e-4;
  std::uint64_t seed = 1;
  bool verbose = false;
};

// One event row for adversarial training; the arrival state and covariates
// are kept separate so RAS-NH can drop the arrival dependency.
struct AdvDatum {
  Vec h_a;
  Vec x;             // normalized covariates
  Scalar value = 0.0;  // s (uncensored) or T (censored)
  bool censored = false;
};

std::vector<AdvDatum> build_adv_data(const rpp::RppModel& arrival,
                                     const eventlog::QueueTrace& trace);

// Wasserstein generator/critic pair. The generator is a 3-layer MLP with a
// standard-normal draw added to each hidden pre-activation and a softplus
// output link; RAS variants route the conditioning through an LSTM whose
// input carries fresh noise per event.
class AdvModel {
 public:
  AdvModel() = default;
  AdvModel(Variant variant, int arrival_hidden, int cov_dim,
           const AdvConfig& cfg, std::uint64_t seed);

  Variant variant() const { return variant_; }
  int noise_dim() const { return noise_dim_; }
  int cov_dim() const { return cov_dim_; }
  int arrival_hidden() const { return arrival_hidden_; }
  int trans_hidden() const { return trans_.hidden_dim(); }

  // --- static (AS) generator ---
  nn::ValueRef generate_node(nn::Tape& t, const AdvDatum& d, Rng& rng,
                             bool with_noise = true) const;
  Scalar generate_value(const AdvDatum& d, Rng& rng,
                        bool with_noise = true) const;

  // --- recurrent (RAS / RAS-NH) generator ---
  struct TransState {
    nn::ValueRef h, c;
  };
  TransState initial_trans_state(nn::Tape& t) const;
  std::pair<nn::ValueRef, TransState> generate_node_recurrent(
      nn::Tape& t, const AdvDatum& d, TransState prev, Rng& rng,
      bool with_noise = true) const;
  // value-level: returns (sample, h_next, c_next)
  std::tuple<Scalar, Vec, Vec> generate_value_recurrent(
      const AdvDatum& d, const Vec& h_prev, const Vec& c_prev, Rng& rng,
      bool with_noise = true) const;

  // --- critic ---
  nn::ValueRef critic_node(nn::Tape& t, nn::ValueRef s, const Vec& x) const;
  // critic value plus d f / d s, both as tape nodes (for the penalty)
  nn::Mlp::WithGrad critic_with_grad(nn::Tape& t, nn::ValueRef s,
                                     const Vec& x) const;
  Scalar critic_value(Scalar s, const Vec& x) const;

  std::vector<nn::ParamTensor*> gen_params();
  std::vector<nn::ParamTensor*> critic_params();

  nn::Mlp& gen_mlp() { return gen_; }
  nn::Mlp& critic_mlp() { return critic_; }
  nn::LstmCell& transition() { return trans_; }

  void save(const std::string& path) const;
  static AdvModel load(const std::string& path);

 private:
  Vec trans_input(const AdvDatum& d, const Vec& eps) const;

  Variant variant_ = Variant::AS;
  int arrival_hidden_ = 0;
  int cov_dim_ = 0;
  int noise_dim_ = 0;
  std::vector<int> gen_dims_, critic_dims_;
  nn::Mlp gen_;
  nn::Mlp critic_;
  nn::LstmCell trans_;  // unused for AS
};

// Eq.-style losses, exposed for tests. Batches are (s, x) pairs.
struct CriticSample {
  Scalar s = 0.0;
  Vec x;
};

// mean f(real) - mean f(fake)
Scalar wasserstein_loss(const AdvModel& m,
                        const std::vector<CriticSample>& real,
                        const std::vector<CriticSample>& fake);

// One-sided squared gradient penalty at uniform interpolates; covariates
// come from the real member of each random pair.
nn::ValueRef lipschitz_penalty_node(nn::Tape& t, const AdvModel& m,
                                    const std::vector<CriticSample>& real,
                                    const std::vector<CriticSample>& fake,
                                    Rng& rng);
Scalar lipschitz_penalty(const AdvModel& m,
                         const std::vector<CriticSample>& real,
                         const std::vector<CriticSample>& fake,
                         std::uint64_t seed);

// mean max(0, T - s_generated) over a censored batch (value level).
Scalar censor_penalty(const AdvModel& m, const std::vector<AdvDatum>& censored,
                      std::uint64_t seed);
// mean |s_obs - s_generated| over an uncensored batch (value level).
Scalar match_penalty(const AdvModel& m, const std::vector<AdvDatum>& uncensored,
                     std::uint64_t seed);

void train_adversarial(AdvModel& model, const std::vector<AdvDatum>& data,
                       const AdvConfig& cfg);

// Monte Carlo service samples per event; RAS variants draw whole
// trajectories so the recurrent state sees its own noise stream.
std::vector<std::vector<Scalar>> predict_mc(const AdvModel& model,
                                            const std::vector<AdvDatum>& data,
                                            int n_samples, std::uint64_t seed);

}  // namespace servtime::advserve
