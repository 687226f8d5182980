#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "servtime/eventlog/trace.hpp"
#include "servtime/rng.hpp"
#include "servtime/types.hpp"

namespace servtime::synthsim {

// Monotone nonnegative link for the nonlinear Hawkes intensity.
struct NonlinearLink {
  enum class Kind { Identity, Cap, SoftplusShift };
  Kind kind = Kind::SoftplusShift;
  Scalar cap = 1.0;       // Kind::Cap: phi(x) = min(x, cap)
  Scalar shift = 0.0;     // Kind::SoftplusShift: phi(x) = softplus(scale*(x - shift))
  Scalar scale = 1.0;

  Scalar operator()(Scalar x) const;
};

// Exponential-kernel Hawkes intensity: lambda(t) = lambda0 + sum alpha e^{-beta dt}.
struct HawkesSpec {
  Scalar base_rate = 1.0;    // lambda0 > 0
  Scalar amplitude = 0.0;    // alpha >= 0
  Scalar decay = 1.0;        // beta > 0
  std::optional<NonlinearLink> link;  // set for the nonlinear variant

  // Throws when alpha/beta >= 1 for the linear variant.
  void validate() const;
};

struct PhaseTypeSpec {
  int n_phases = 1;
  Mat sub_generator;  // n x n, off-diagonal >= 0, row sums <= 0
  Vec initial_dist;   // sums to 1

  void validate() const;
  static PhaseTypeSpec exponential(Scalar rate);
  static PhaseTypeSpec erlang(int k, Scalar rate);
};

// Ogata thinning; works for both the linear and nonlinear variants since
// the exponential-kernel excitation decays between events and the link is
// monotone, so the intensity right after the envelope refresh dominates.
std::vector<Scalar> simulate_hawkes(const HawkesSpec& spec, Scalar horizon,
                                    std::uint64_t seed);

Scalar sample_phase_type(const PhaseTypeSpec& spec, Rng& rng);

// Exact event-driven processor-sharing queue: each of the U(t) jobs in
// system is served at rate 1/U(t). Returns departure times per job.
std::vector<Scalar> simulate_ps_queue(const std::vector<Scalar>& arrivals,
                                      const std::vector<Scalar>& requirements);

enum class Family { H_PT, H_PS, NH_PT, NH_PS };

Family parse_family(const std::string& name);
std::string family_name(Family f);

struct DatasetSpec {
  Family family = Family::H_PT;
  HawkesSpec arrivals;
  PhaseTypeSpec service;       // PT families
  Scalar ps_mean_requirement = 1.0;  // PS families: i.i.d. Exponential
};

DatasetSpec default_dataset_spec(Family family);

// Builds a queue trace for the chosen family; departures past the horizon
// are stored as censored.
eventlog::QueueTrace make_dataset(const DatasetSpec& spec, Scalar horizon,
                                  std::uint64_t seed);

}  // namespace servtime::synthsim
