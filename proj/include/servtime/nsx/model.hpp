#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "servtime/eventlog/trace.hpp"
#include "servtime/nn/layers.hpp"
#include "servtime/nsx/families.hpp"
#include "servtime/rpp/model.hpp"

namespace servtime::nsx {

struct NsxConfig {
  std::vector<int> hidden = {32, 32};
  int epochs = 40;
  Scalar lr = 1e-4;
  int batch_size = 64;
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct ServicePrediction {
  Vec params;            // linked family parameters
  Scalar point = 0.0;    // mean of mc_samples
  std::vector<Scalar> mc_samples;
};

// One conditioning row: the frozen arrival model's hidden state for the
// event concatenated with its (normalized) covariates.
struct ServiceDatum {
  Vec conditioning;
  Scalar value = 0.0;  // s_i when uncensored, T_i when censored
  bool censored = false;
};

std::vector<ServiceDatum> build_service_data(const rpp::RppModel& arrival,
                                             const eventlog::QueueTrace& trace);

// MLP-parametrized service distribution trained by censored max likelihood.
class NsxModel {
 public:
  NsxModel() = default;
  NsxModel(Family family, int cond_dim, const std::vector<int>& hidden,
           std::uint64_t seed);

  // Negative censored log-likelihood of a batch, on the tape.
  nn::ValueRef loss(nn::Tape& t, const std::vector<ServiceDatum>& batch) const;
  Scalar loss_value(const std::vector<ServiceDatum>& batch) const;

  Vec emit_params(const Vec& conditioning) const;
  ServicePrediction predict(const Vec& conditioning, int n_samples,
                            Rng& rng) const;

  void fit(const std::vector<ServiceDatum>& data, const NsxConfig& cfg);

  Family family() const { return family_; }
  int cond_dim() const { return cond_dim_; }
  Scalar pareto_cap() const { return pareto_cap_; }
  void set_pareto_cap(Scalar c) { pareto_cap_ = c; }

  std::vector<nn::ParamTensor*> params();
  void save(const std::string& path) const;
  static NsxModel load(const std::string& path);

 private:
  Family family_ = Family::Exponential;
  int cond_dim_ = 0;
  std::vector<int> hidden_;
  nn::Mlp head_;
  Scalar pareto_cap_ = 1.0;  // 0.9 * min uncensored s, set at fit time
};

}  // namespace servtime::nsx
