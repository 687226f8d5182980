#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "servtime/evalkit/metrics.hpp"
#include "servtime/rng.hpp"

using namespace servtime;
using namespace servtime::evalkit;

TEST_CASE("prediction error closed values") {
  CHECK(prediction_error({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
  CHECK(prediction_error({1.0, 3.0}, {2.0, 3.0}) == doctest::Approx(0.5));
}

TEST_CASE("prediction error is permutation invariant") {
  std::vector<Scalar> s = {1.0, 4.0, 2.0, 8.0};
  std::vector<Scalar> p = {0.5, 5.0, 2.5, 6.0};
  const Scalar base = prediction_error(s, p);
  std::vector<int> order = {3, 0, 2, 1};
  std::vector<Scalar> s2, p2;
  for (int i : order) {
    s2.push_back(s[i]);
    p2.push_back(p[i]);
  }
  CHECK(prediction_error(s2, p2) == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("ks closed values") {
  std::vector<Scalar> a = {1.0, 2.0, 3.0};
  CHECK(ks_two_sample(a, a) == 0.0);
  CHECK(ks_two_sample({1.0, 2.0}, {5.0, 6.0}) == doctest::Approx(1.0));
  CHECK(ks_two_sample({1.0, 2.0, 3.0}, {2.0, 3.0, 4.0}) ==
        doctest::Approx(1.0 / 3.0));
}

TEST_CASE("ks matches the brute-force oracle on random instances") {
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    const int na = 1 + rng.index(12), nb = 1 + rng.index(12);
    std::vector<Scalar> a, b;
    for (int i = 0; i < na; ++i) a.push_back(rng.index(6) * 0.5);  // ties
    for (int i = 0; i < nb; ++i) b.push_back(rng.normal());
    CHECK(ks_two_sample(a, b) ==
          doctest::Approx(oracles::brute_force_ks(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("qq pairs sit on the diagonal for identical samples") {
  std::vector<Scalar> a = {3.0, 1.0, 2.0, 5.0, 4.0};
  auto pairs = qq_export(a, a, 4);
  for (auto [e, m] : pairs) CHECK(e == doctest::Approx(m).epsilon(1e-12));
}

TEST_CASE("qq pairs lie on the slope-2 line when b = 2a") {
  Rng rng(4);
  std::vector<Scalar> a, b;
  for (int i = 0; i < 100; ++i) {
    const Scalar x = rng.exponential(1.0);
    a.push_back(x);
    b.push_back(2.0 * x);
  }
  auto pairs = qq_export(a, b, 20);
  for (auto [e, m] : pairs) CHECK(m == doctest::Approx(2.0 * e).epsilon(1e-9));
}

TEST_CASE("qq caps n_quantiles at the sample size") {
  std::vector<Scalar> a = {1.0, 2.0, 3.0};
  std::vector<Scalar> b = {1.5, 2.5, 3.5, 4.5};
  auto pairs = qq_export(a, b, 50);
  CHECK(static_cast<int>(pairs.size()) <= 3);
  CHECK(!pairs.empty());
}

TEST_CASE("mean baseline closed values") {
  CHECK(mean_baseline({1.0, 3.0}, {2.0, 2.0}) == 0.0);
  CHECK(mean_baseline({1.0, 3.0}, {2.0, 4.0}) == doctest::Approx(1.0));
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    std::vector<Scalar> train, test;
    for (int i = 0; i < 10; ++i) train.push_back(rng.normal());
    for (int i = 0; i < 6; ++i) test.push_back(rng.normal());
    CHECK(mean_baseline(train, test) >= 0.0);
  }
}

TEST_CASE("eval report serializes all keys") {
  EvalReport rep;
  rep.error = 0.25;
  rep.ks = 0.1;
  rep.n_events = 12;
  rep.n_censored = 3;
  rep.baseline_error = 0.5;
  rep.qq_pairs = {{1.0, 1.1}, {2.0, 2.2}};
  rep.write_json("rep_rt.json");
  std::ifstream in("rep_rt.json");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string body = ss.str();
  for (const char* key : {"error", "ks", "n_events", "n_censored",
                          "baseline_error"})
    CHECK(body.find(key) != std::string::npos);
  rep.write_qq_csv("rep_qq.csv");
  std::ifstream qq("rep_qq.csv");
  std::string line;
  int lines = 0;
  while (std::getline(qq, line)) ++lines;
  CHECK(lines == 3);  // header + 2 pairs
  std::remove("rep_rt.json");
  std::remove("rep_qq.csv");
}
