#pragma once

#include <optional>
#include <string>
#include <vector>

#include "servtime/types.hpp"

namespace servtime::eventlog {

struct ArrivalEvent {
  Scalar arrival_time = 0.0;
  std::optional<Scalar> departure_time;  // absent == censored at horizon
  Vec covariates;                        // possibly empty
};

struct QueueTrace {
  std::vector<ArrivalEvent> events;
  Scalar horizon = 0.0;

  int size() const { return static_cast<int>(events.size()); }
  int covariate_dim() const {
    return events.empty() ? 0 : static_cast<int>(events.front().covariates.size());
  }
};

// Partition of a trace into uncensored events (observed service s_i) and
// censored events (only the window T_i = horizon - a_i is known).
struct CensorSplit {
  std::vector<int> uncensored;     // indices into trace.events
  std::vector<int> censored;
  std::vector<Scalar> service;     // s_i = d_i - a_i, parallel to uncensored
  std::vector<Scalar> window;      // T_i, parallel to censored
};

struct NormalizationSpec {
  Scalar time_scale = 1.0;
  Vec covariate_means;
  Vec covariate_stds;
};

CensorSplit censor_split(const QueueTrace& trace);

// Reads the event CSV (header: arrival_time,departure_time,cov_0,...).
// Departures beyond the horizon are stored as absent. Rows with d < a are
// rejected with a warning on stderr.
QueueTrace ingest_csv(const std::string& path, Scalar horizon);

void write_csv(const QueueTrace& trace, const std::string& path);

// Chronological split; test set is the suffix. Train horizon becomes the
// first test arrival time.
std::pair<QueueTrace, QueueTrace> split_chronological(const QueueTrace& trace,
                                                      Scalar test_fraction);

std::vector<Scalar> compute_interarrivals(const QueueTrace& trace);

NormalizationSpec fit_normalizer(const QueueTrace& train);
QueueTrace apply_normalizer(const NormalizationSpec& spec,
                            const QueueTrace& trace);

}  // namespace servtime::eventlog
