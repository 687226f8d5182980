#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "servtime/eventlog/trace.hpp"
#include "servtime/nn/adam.hpp"
#include "servtime/nn/layers.hpp"
#include "servtime/rng.hpp"
#include "servtime/rpp/head.hpp"

namespace servtime::rpp {

struct RppConfig {
  int hidden_dim = 16;
  int epochs = 20;
  Scalar lr = 1e-4;
  std::uint64_t seed = 1;
  int bptt_window = 64;
  bool include_tail_survival = false;  // survival term for the last open gap
  bool verbose = false;
};

// Recurrent point process: GRU recurrence over event features
// (log(1+delta), covariates), intensity head exp(v.h + w dt + b).
// Inter-arrivals are scaled by the stored normalizer; all public sampling
// and prediction values are in original time units.
class RppModel {
 public:
  RppModel() = default;
  RppModel(int hidden_dim, int cov_dim, std::uint64_t seed);

  struct State {
    Vec h;
    Scalar last_arrival = 0.0;
  };

  State initial_state() const;
  // Advance with an observed event: its inter-arrival (original units) and
  // covariates (original units; normalization is internal).
  State advance(const State& s, Scalar delta, const Vec& covariates,
                Scalar arrival_time) const;

  // Head at the current state, in normalized time.
  ExpHead head(const State& s) const;

  // Expected next inter-arrival, original units.
  ExpectedNext expected_next_arrival(const State& s) const;

  // One inverse-transform draw of the next inter-arrival, original units.
  std::optional<Scalar> sample_next(const State& s, Rng& rng) const;

  // Repeated inverse-transform sampling until the horizon or NO_ARRIVAL.
  std::vector<Scalar> sample_path(const State& start, Scalar horizon,
                                  std::uint64_t seed) const;

  // Teacher-forced hidden states, one per event (state after the event).
  std::vector<Vec> hidden_states(const eventlog::QueueTrace& trace) const;

  // Mean log f* per predicted inter-arrival (normalized time), no grads.
  Scalar mean_log_likelihood(const eventlog::QueueTrace& trace) const;

  void fit(const std::vector<eventlog::QueueTrace>& traces,
           const RppConfig& cfg);

  int hidden_dim() const { return gru_.hidden_dim(); }
  int cov_dim() const { return cov_dim_; }
  const eventlog::NormalizationSpec& normalizer() const { return normalizer_; }
  void set_normalizer(const eventlog::NormalizationSpec& n) { normalizer_ = n; }

  std::vector<nn::ParamTensor*> params();
  std::vector<const nn::ParamTensor*> params() const;

  void save(const std::string& path) const;
  static RppModel load(const std::string& path);

  // exposed for training code (mempool reuses the head tensors' layout)
  nn::GruCell& gru() { return gru_; }
  const nn::GruCell& gru() const { return gru_; }
  nn::ParamTensor& head_v() { return head_v_; }
  nn::ParamTensor& head_w() { return head_w_; }
  nn::ParamTensor& head_b() { return head_b_; }

  Vec features(Scalar delta, const Vec& covariates) const;

 private:
  int cov_dim_ = 0;
  nn::GruCell gru_;
  nn::ParamTensor head_v_, head_w_, head_b_;
  eventlog::NormalizationSpec normalizer_;
};

}  // namespace servtime::rpp
