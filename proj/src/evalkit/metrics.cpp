#include "servtime/evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace servtime::evalkit {

Scalar prediction_error(const std::vector<Scalar>& observed,
                        const std::vector<Scalar>& predicted) {
  if (observed.size() != predicted.size() || observed.empty())
    throw std::invalid_argument("prediction_error: length mismatch or empty");
  Scalar s = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i)
    s += std::abs(observed[i] - predicted[i]);
  return s / static_cast<Scalar>(observed.size());
}

Scalar ks_two_sample(std::vector<Scalar> a, std::vector<Scalar> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const Scalar na = static_cast<Scalar>(a.size());
  const Scalar nb = static_cast<Scalar>(b.size());
  std::size_t ia = 0, ib = 0;
  Scalar d = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const Scalar x = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    d = std::max(d, std::abs(ia / na - ib / nb));
  }
  return d;
}

std::vector<std::pair<Scalar, Scalar>> qq_export(std::vector<Scalar> a,
                                                 std::vector<Scalar> b,
                                                 int n_quantiles) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("qq_export: empty sample");
  const int cap = static_cast<int>(std::min(a.size(), b.size()));
  if (n_quantiles > cap) {
    std::cerr << "qq_export: n_quantiles capped at " << cap << "\n";
    n_quantiles = cap;
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  auto quantile = [](const std::vector<Scalar>& x, Scalar p) {
    // type-7: h = (n-1) p
    const Scalar h = (static_cast<Scalar>(x.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    const Scalar w = h - static_cast<Scalar>(lo);
    return (1.0 - w) * x[lo] + w * x[hi];
  };
  std::vector<std::pair<Scalar, Scalar>> pairs;
  for (int k = 1; k <= n_quantiles; ++k) {
    const Scalar p = static_cast<Scalar>(k) / (n_quantiles + 1.0);
    pairs.emplace_back(quantile(a, p), quantile(b, p));
  }
  return pairs;
}

Scalar mean_baseline(const std::vector<Scalar>& train,
                     const std::vector<Scalar>& test) {
  if (train.empty()) throw std::invalid_argument("mean_baseline: empty train");
  Scalar m = 0.0;
  for (Scalar s : train) m += s;
  m /= static_cast<Scalar>(train.size());
  std::vector<Scalar> pred(test.size(), m);
  return prediction_error(test, pred);
}

void EvalReport::write_json(const std::string& path) const {
  nlohmann::json j;
  j["error"] = error;
  j["ks"] = ks;
  j["n_events"] = n_events;
  j["n_censored"] = n_censored;
  j["baseline_error"] = baseline_error;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("EvalReport: cannot open " + path);
  os << j.dump(2) << "\n";
}

void EvalReport::write_qq_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("EvalReport: cannot open " + path);
  os << "empirical_quantile,model_quantile\n";
  os.precision(17);
  for (const auto& [e, m] : qq_pairs) os << e << "," << m << "\n";
}

}  // namespace servtime::evalkit
