#include "servtime/synthsim/synthsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "servtime/nn/special.hpp"

namespace servtime::synthsim {

Scalar NonlinearLink::operator()(Scalar x) const {
  switch (kind) {
    case Kind::Identity:
      return x;
    case Kind::Cap:
      return std::min(x, cap);
    case Kind::SoftplusShift:
      return nn::softplus(scale * (x - shift));
  }
  return x;
}

void HawkesSpec::validate() const {
  if (!(base_rate > 0.0)) throw std::invalid_argument("Hawkes: base rate must be positive");
  if (amplitude < 0.0) throw std::invalid_argument("Hawkes: amplitude must be >= 0");
  if (!(decay > 0.0)) throw std::invalid_argument("Hawkes: decay must be positive");
  if (!link && amplitude / decay >= 1.0)
    throw std::invalid_argument("Hawkes: nonstationary (alpha/beta >= 1)");
}

void PhaseTypeSpec::validate() const {
  const int n = n_phases;
  if (n <= 0 || sub_generator.rows() != n || sub_generator.cols() != n ||
      initial_dist.size() != n)
    throw std::invalid_argument("PhaseType: shape mismatch");
  bool absorbing = false;
  for (int i = 0; i < n; ++i) {
    Scalar row = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i != j && sub_generator(i, j) < 0.0)
        throw std::invalid_argument("PhaseType: negative off-diagonal rate");
      row += sub_generator(i, j);
    }
    if (row > 1e-12) throw std::invalid_argument("PhaseType: positive row sum");
    if (row < -1e-12) absorbing = true;
  }
  if (!absorbing) throw std::invalid_argument("PhaseType: absorption unreachable");
  if (std::abs(initial_dist.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("PhaseType: initial distribution must sum to 1");
}

PhaseTypeSpec PhaseTypeSpec::exponential(Scalar rate) {
  PhaseTypeSpec s;
  s.n_phases = 1;
  s.sub_generator = Mat::Constant(1, 1, -rate);
  s.initial_dist = Vec::Ones(1);
  return s;
}

PhaseTypeSpec PhaseTypeSpec::erlang(int k, Scalar rate) {
  PhaseTypeSpec s;
  s.n_phases = k;
  s.sub_generator = Mat::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    s.sub_generator(i, i) = -rate;
    if (i + 1 < k) s.sub_generator(i, i + 1) = rate;
  }
  s.initial_dist = Vec::Zero(k);
  s.initial_dist[0] = 1.0;
  return s;
}

std::vector<Scalar> simulate_hawkes(const HawkesSpec& spec, Scalar horizon,
                                    std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Scalar> events;
  Scalar t = 0.0;
  Scalar excitation = 0.0;  // sum alpha e^{-beta (t - T_i)} at current t
  auto base_intensity = [&](Scalar exc) { return spec.base_rate + exc; };
  while (true) {
    // Envelope from the current time; excitation only decays until the
    // next accepted event, and the link is monotone.
    const Scalar env_base = base_intensity(excitation);
    const Scalar envelope = spec.link ? (*spec.link)(env_base) : env_base;
    if (!(envelope > 0.0)) break;
    const Scalar wait = rng.exponential(envelope);
    const Scalar t_next = t + wait;
    if (t_next > horizon) break;
    const Scalar decayed = excitation * std::exp(-spec.decay * wait);
    const Scalar lam_lin = base_intensity(decayed);
    const Scalar lam = spec.link ? (*spec.link)(lam_lin) : lam_lin;
    t = t_next;
    excitation = decayed;
    if (rng.uniform() * envelope <= lam) {
      events.push_back(t);
      excitation += spec.amplitude;
    }
  }
  return events;
}

Scalar sample_phase_type(const PhaseTypeSpec& spec, Rng& rng) {
  spec.validate();
  const int n = spec.n_phases;
  // Draw the initial phase.
  int phase = n - 1;
  {
    Scalar u = rng.uniform();
    Scalar acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += spec.initial_dist[i];
      if (u < acc) {
        phase = i;
        break;
      }
    }
  }
  Scalar t = 0.0;
  while (true) {
    const Scalar exit_rate = -spec.sub_generator(phase, phase);
    if (!(exit_rate > 0.0))
      throw std::runtime_error("PhaseType: stuck in a phase with zero exit rate");
    t += rng.exponential(exit_rate);
    Scalar u = rng.uniform() * exit_rate;
    Scalar acc = 0.0;
    int next = -1;  // absorption unless a transition wins
    for (int j = 0; j < n; ++j) {
      if (j == phase) continue;
      acc += spec.sub_generator(phase, j);
      if (u < acc) {
        next = j;
        break;
      }
    }
    if (next < 0) return t;
    phase = next;
  }
}

std::vector<Scalar> simulate_ps_queue(const std::vector<Scalar>& arrivals,
                                      const std::vector<Scalar>& requirements) {
  if (arrivals.size() != requirements.size())
    throw std::invalid_argument("simulate_ps_queue: size mismatch");
  const int n = static_cast<int>(arrivals.size());
  for (int i = 0; i < n; ++i)
    if (!(requirements[i] > 0.0))
      throw std::invalid_argument("simulate_ps_queue: requirements must be positive");
  std::vector<Scalar> departures(n, 0.0);
  std::vector<Scalar> remaining(n, 0.0);
  std::vector<int> in_system;
  Scalar clock = 0.0;
  int next_arrival = 0;
  while (next_arrival < n || !in_system.empty()) {
    // Next departure if nothing arrives first.
    Scalar dep_dt = std::numeric_limits<Scalar>::infinity();
    int dep_job = -1;
    if (!in_system.empty()) {
      const Scalar u = static_cast<Scalar>(in_system.size());
      for (int id : in_system) {
        const Scalar dt = remaining[id] * u;
        if (dt < dep_dt) {
          dep_dt = dt;
          dep_job = id;
        }
      }
    }
    const Scalar next_arr_t = next_arrival < n
                                  ? arrivals[next_arrival]
                                  : std::numeric_limits<Scalar>::infinity();
    if (next_arr_t <= clock + dep_dt) {
      // Serve everyone up to the arrival, then admit the job.
      const Scalar dt = next_arr_t - clock;
      if (!in_system.empty()) {
        const Scalar served = dt / static_cast<Scalar>(in_system.size());
        for (int id : in_system) remaining[id] -= served;
      }
      clock = next_arr_t;
      remaining[next_arrival] = requirements[next_arrival];
      in_system.push_back(next_arrival);
      ++next_arrival;
    } else {
      const Scalar served = dep_dt / static_cast<Scalar>(in_system.size());
      for (int id : in_system) remaining[id] -= served;
      clock += dep_dt;
      departures[dep_job] = clock;
      in_system.erase(std::find(in_system.begin(), in_system.end(), dep_job));
    }
  }
  return departures;
}

Family parse_family(const std::string& name) {
  if (name == "h-pt") return Family::H_PT;
  if (name == "h-ps") return Family::H_PS;
  if (name == "nh-pt") return Family::NH_PT;
  if (name == "nh-ps") return Family::NH_PS;
  throw std::invalid_argument("unknown family: " + name);
}

std::string family_name(Family f) {
  switch (f) {
    case Family::H_PT: return "h-pt";
    case Family::H_PS: return "h-ps";
    case Family::NH_PT: return "nh-pt";
    case Family::NH_PS: return "nh-ps";
  }
  return "?";
}

DatasetSpec default_dataset_spec(Family family) {
  DatasetSpec spec;
  spec.family = family;
  spec.arrivals.base_rate = 1.0;
  spec.arrivals.amplitude = 0.5;
  spec.arrivals.decay = 1.0;
  if (family == Family::NH_PT || family == Family::NH_PS) {
    NonlinearLink link;
    link.kind = NonlinearLink::Kind::SoftplusShift;
    link.shift = 0.5;
    link.scale = 1.0;
    spec.arrivals.link = link;
  }
  spec.service = PhaseTypeSpec::erlang(2, 4.0);  // mean 0.5
  spec.ps_mean_requirement = 0.5;
  return spec;
}

eventlog::QueueTrace make_dataset(const DatasetSpec& spec, Scalar horizon,
                                  std::uint64_t seed) {
  const auto arrivals = simulate_hawkes(spec.arrivals, horizon, seed);
  const int n = static_cast<int>(arrivals.size());
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);  // independent service stream
  std::vector<Scalar> departures(n);
  if (spec.family == Family::H_PT || spec.family == Family::NH_PT) {
    for (int i = 0; i < n; ++i)
      departures[i] = arrivals[i] + sample_phase_type(spec.service, rng);
  } else {
    std::vector<Scalar> req(n);
    for (int i = 0; i < n; ++i)
      req[i] = rng.exponential(1.0 / spec.ps_mean_requirement);
    departures = simulate_ps_queue(arrivals, req);
  }
  eventlog::QueueTrace trace;
  trace.horizon = horizon;
  for (int i = 0; i < n; ++i) {
    eventlog::ArrivalEvent ev;
    ev.arrival_time = arrivals[i];
    if (departures[i] <= horizon) ev.departure_time = departures[i];
    ev.covariates = Vec();
    trace.events.push_back(std::move(ev));
  }
  return trace;
}

}  // namespace servtime::synthsim
