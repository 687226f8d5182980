#pragma once

#include <string>
#include <utility>
#include <vector>

#include "servtime/types.hpp"

namespace servtime::evalkit {

struct EvalReport {
  Scalar error = 0.0;
  Scalar ks = 0.0;
  std::vector<std::pair<Scalar, Scalar>> qq_pairs;  // (empirical, model)
  int n_events = 0;
  int n_censored = 0;
  Scalar baseline_error = 0.0;

  void write_json(const std::string& path) const;
  void write_qq_csv(const std::string& path) const;
};

// Mean absolute error, 1/N sum |s_i - pred_i|, original time units.
Scalar prediction_error(const std::vector<Scalar>& observed,
                        const std::vector<Scalar>& predicted);

// Exact two-sample Kolmogorov-Smirnov statistic over the merged support.
Scalar ks_two_sample(std::vector<Scalar> a, std::vector<Scalar> b);

// Matched empirical quantiles on the k/(n+1) grid, type-7 interpolation.
// n_quantiles is capped at min(len(a), len(b)) with a warning.
std::vector<std::pair<Scalar, Scalar>> qq_export(std::vector<Scalar> a,
                                                 std::vector<Scalar> b,
                                                 int n_quantiles);

// Error of the constant predictor mean(train) on the test set.
Scalar mean_baseline(const std::vector<Scalar>& train,
                     const std::vector<Scalar>& test);

}  // namespace servtime::evalkit
