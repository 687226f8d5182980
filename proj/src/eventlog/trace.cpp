#include "servtime/eventlog/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace servtime::eventlog {

CensorSplit censor_split(const QueueTrace& trace) {
  CensorSplit out;
  for (int i = 0; i < trace.size(); ++i) {
    const ArrivalEvent& e = trace.events[i];
    if (e.departure_time) {
      out.uncensored.push_back(i);
      out.service.push_back(*e.departure_time - e.arrival_time);
    } else {
      out.censored.push_back(i);
      out.window.push_back(trace.horizon - e.arrival_time);
    }
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

QueueTrace ingest_csv(const std::string& path, Scalar horizon) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("ingest_csv: cannot open " + path);
  QueueTrace trace;
  trace.horizon = horizon;
  std::string line;
  long line_no = 0;
  bool saw_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!saw_header) {
      saw_header = true;  // header row required by the schema
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() < 2)
      throw std::runtime_error("ingest_csv: line " + std::to_string(line_no) +
                               ": expected at least 2 fields");
    ArrivalEvent ev;
    try {
      ev.arrival_time = std::stod(fields[0]);
      if (!fields[1].empty()) ev.departure_time = std::stod(fields[1]);
      ev.covariates.resize(static_cast<int>(fields.size()) - 2);
      for (std::size_t k = 2; k < fields.size(); ++k)
        ev.covariates[static_cast<int>(k) - 2] = std::stod(fields[k]);
    } catch (const std::exception&) {
      throw std::runtime_error("ingest_csv: line " + std::to_string(line_no) +
                               ": unparseable field");
    }
    if (ev.departure_time && *ev.departure_time < ev.arrival_time) {
      std::cerr << "ingest_csv: line " << line_no
                << ": departure before arrival, row rejected\n";
      continue;
    }
    if (ev.departure_time && *ev.departure_time > horizon)
      ev.departure_time.reset();  // censored at the horizon
    trace.events.push_back(std::move(ev));
  }
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const ArrivalEvent& a, const ArrivalEvent& b) {
                     return a.arrival_time < b.arrival_time;
                   });
  return trace;
}

void write_csv(const QueueTrace& trace, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  os << "arrival_time,departure_time";
  const int k = trace.covariate_dim();
  for (int i = 0; i < k; ++i) os << ",cov_" << i;
  os << "\n";
  os.precision(17);
  for (const ArrivalEvent& e : trace.events) {
    os << e.arrival_time << ",";
    if (e.departure_time) os << *e.departure_time;
    for (int i = 0; i < e.covariates.size(); ++i) os << "," << e.covariates[i];
    os << "\n";
  }
}

std::pair<QueueTrace, QueueTrace> split_chronological(const QueueTrace& trace,
                                                      Scalar test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split_chronological: fraction must be in (0,1)");
  if (trace.size() < 2)
    throw std::invalid_argument("split_chronological: need >= 2 events");
  int n_test = static_cast<int>(std::llround(test_fraction * trace.size()));
  n_test = std::max(1, std::min(n_test, trace.size() - 1));
  const int n_train = trace.size() - n_test;
  QueueTrace train, test;
  train.events.assign(trace.events.begin(), trace.events.begin() + n_train);
  test.events.assign(trace.events.begin() + n_train, trace.events.end());
  train.horizon = test.events.front().arrival_time;
  test.horizon = trace.horizon;
  // Departures past the new train horizon become censored.
  for (ArrivalEvent& e : train.events)
    if (e.departure_time && *e.departure_time > train.horizon)
      e.departure_time.reset();
  return {std::move(train), std::move(test)};
}

std::vector<Scalar> compute_interarrivals(const QueueTrace& trace) {
  std::vector<Scalar> delta;
  for (int i = 1; i < trace.size(); ++i)
    delta.push_back(trace.events[i].arrival_time -
                    trace.events[i - 1].arrival_time);
  return delta;
}

NormalizationSpec fit_normalizer(const QueueTrace& train) {
  NormalizationSpec spec;
  const auto delta = compute_interarrivals(train);
  if (!delta.empty()) {
    Scalar s = 0.0;
    for (Scalar d : delta) s += d;
    spec.time_scale = s / static_cast<Scalar>(delta.size());
    if (!(spec.time_scale > 0.0)) spec.time_scale = 1.0;
  }
  const int k = train.covariate_dim();
  spec.covariate_means = Vec::Zero(k);
  spec.covariate_stds = Vec::Ones(k);
  if (k > 0 && train.size() > 0) {
    for (const ArrivalEvent& e : train.events) spec.covariate_means += e.covariates;
    spec.covariate_means /= train.size();
    Vec var = Vec::Zero(k);
    for (const ArrivalEvent& e : train.events) {
      Vec d = e.covariates - spec.covariate_means;
      var += d.cwiseProduct(d);
    }
    var /= train.size();
    for (int i = 0; i < k; ++i)
      spec.covariate_stds[i] = var[i] > 0.0 ? std::sqrt(var[i]) : 1.0;
  }
  return spec;
}

QueueTrace apply_normalizer(const NormalizationSpec& spec,
                            const QueueTrace& trace) {
  QueueTrace out = trace;
  out.horizon = trace.horizon / spec.time_scale;
  for (ArrivalEvent& e : out.events) {
    e.arrival_time /= spec.time_scale;
    if (e.departure_time) e.departure_time = *e.departure_time / spec.time_scale;
    for (int i = 0; i < e.covariates.size(); ++i)
      e.covariates[i] = (e.covariates[i] - spec.covariate_means[i]) /
                        spec.covariate_stds[i];
  }
  return out;
}

}  // namespace servtime::eventlog
