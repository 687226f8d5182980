#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "servtime/eventlog/trace.hpp"
#include "servtime/rng.hpp"

using namespace servtime;
using eventlog::QueueTrace;

namespace {

QueueTrace two_event_trace() {
  QueueTrace t;
  t.horizon = 10.0;
  t.events.push_back({1.0, 2.0, Vec()});
  t.events.push_back({3.0, std::nullopt, Vec()});
  return t;
}

std::string write_tmp(const std::string& body) {
  const std::string path = "eventlog_tmp.csv";
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("censor split separates observed and open events") {
  auto split = eventlog::censor_split(two_event_trace());
  REQUIRE(split.uncensored.size() == 1);
  REQUIRE(split.censored.size() == 1);
  CHECK(split.uncensored[0] == 0);
  CHECK(split.service[0] == 1.0);
  CHECK(split.censored[0] == 1);
  CHECK(split.window[0] == 7.0);
}

TEST_CASE("ingest stores departures past the horizon as censored") {
  auto path = write_tmp(
      "arrival_time,departure_time\n"
      "1.0,2.0\n"
      "3.0,12.0\n");
  auto trace = eventlog::ingest_csv(path, 10.0);
  REQUIRE(trace.size() == 2);
  CHECK(trace.events[0].departure_time.has_value());
  CHECK_FALSE(trace.events[1].departure_time.has_value());
  std::remove(path.c_str());
}

TEST_CASE("ingest of an empty file yields an empty valid trace") {
  auto path = write_tmp("arrival_time,departure_time\n");
  auto trace = eventlog::ingest_csv(path, 10.0);
  CHECK(trace.size() == 0);
  CHECK(trace.covariate_dim() == 0);
  std::remove(path.c_str());
}

TEST_CASE("csv export round-trips") {
  QueueTrace t;
  t.horizon = 5.0;
  Vec c(2);
  c << 0.5, -1.0;
  t.events.push_back({0.5, 1.25, c});
  t.events.push_back({2.0, std::nullopt, c});
  const std::string path = "eventlog_rt.csv";
  eventlog::write_csv(t, path);
  auto back = eventlog::ingest_csv(path, t.horizon);
  REQUIRE(back.size() == 2);
  CHECK(back.events[0].arrival_time == doctest::Approx(0.5));
  CHECK(back.events[0].departure_time.value() == doctest::Approx(1.25));
  CHECK_FALSE(back.events[1].departure_time.has_value());
  CHECK(back.covariate_dim() == 2);
  CHECK(back.events[1].covariates[1] == doctest::Approx(-1.0));
  std::remove(path.c_str());
}

TEST_CASE("chronological split keeps the suffix as test") {
  QueueTrace t;
  t.horizon = 200.0;
  for (int i = 0; i < 100; ++i)
    t.events.push_back({static_cast<Scalar>(i + 1), std::nullopt, Vec()});
  auto [train, test] = eventlog::split_chronological(t, 0.05);
  CHECK(train.size() == 95);
  CHECK(test.size() == 5);
  CHECK(test.events.front().arrival_time == 96.0);
  CHECK(train.horizon == doctest::Approx(96.0));
}

TEST_CASE("split of two events at fraction 0.5 is one and one") {
  QueueTrace t;
  t.horizon = 10.0;
  t.events.push_back({1.0, std::nullopt, Vec()});
  t.events.push_back({2.0, std::nullopt, Vec()});
  auto [train, test] = eventlog::split_chronological(t, 0.5);
  CHECK(train.size() == 1);
  CHECK(test.size() == 1);
}

TEST_CASE("split ties break by stable index order") {
  QueueTrace t;
  t.horizon = 10.0;
  Vec tag(1);
  for (int i = 0; i < 4; ++i) {
    tag[0] = i;
    t.events.push_back({5.0, std::nullopt, tag});  // all tied
  }
  auto [train, test] = eventlog::split_chronological(t, 0.5);
  REQUIRE(train.size() == 2);
  REQUIRE(test.size() == 2);
  CHECK(train.events[0].covariates[0] == 0.0);
  CHECK(train.events[1].covariates[0] == 1.0);
  CHECK(test.events[0].covariates[0] == 2.0);
  CHECK(test.events[1].covariates[0] == 3.0);
}

TEST_CASE("interarrivals of [0,1,3] are [1,2]") {
  QueueTrace t;
  t.horizon = 5.0;
  for (Scalar a : {0.0, 1.0, 3.0}) t.events.push_back({a, std::nullopt, Vec()});
  auto d = eventlog::compute_interarrivals(t);
  REQUIRE(d.size() == 2);
  CHECK(d[0] == 1.0);
  CHECK(d[1] == 2.0);
}

TEST_CASE("constant-gap arrivals give constant interarrivals") {
  QueueTrace t;
  t.horizon = 100.0;
  for (int i = 0; i < 20; ++i)
    t.events.push_back({2.5 * i, std::nullopt, Vec()});
  auto d = eventlog::compute_interarrivals(t);
  for (Scalar x : d) CHECK(x == doctest::Approx(2.5));
}

TEST_CASE("single event yields no interarrivals") {
  QueueTrace t;
  t.horizon = 5.0;
  t.events.push_back({1.0, std::nullopt, Vec()});
  CHECK(eventlog::compute_interarrivals(t).empty());
}

TEST_CASE("normalizer scales the mean gap to one") {
  QueueTrace t;
  t.horizon = 100.0;
  Scalar a = 0.0;
  for (int i = 0; i < 11; ++i) {
    a += (i % 2 == 0) ? 1.0 : 3.0;
    t.events.push_back({a, std::nullopt, Vec()});
  }
  // the ten inter-event gaps alternate 3 and 1, mean 2
  auto spec = eventlog::fit_normalizer(t);
  CHECK(spec.time_scale == doctest::Approx(2.0));
  auto scaled = eventlog::apply_normalizer(spec, t);
  auto d = eventlog::compute_interarrivals(scaled);
  Scalar mean = 0.0;
  for (Scalar x : d) mean += x;
  mean /= d.size();
  CHECK(mean == doctest::Approx(1.0));
}

TEST_CASE("constant covariate columns pin std to one and map to zero") {
  QueueTrace t;
  t.horizon = 10.0;
  Vec c(1);
  c << 7.0;
  for (int i = 0; i < 5; ++i)
    t.events.push_back({static_cast<Scalar>(i + 1), std::nullopt, c});
  auto spec = eventlog::fit_normalizer(t);
  CHECK(spec.covariate_stds[0] == 1.0);
  auto scaled = eventlog::apply_normalizer(spec, t);
  for (const auto& e : scaled.events) CHECK(e.covariates[0] == 0.0);
}

TEST_CASE("normalize then invert recovers the trace") {
  Rng rng(11);
  QueueTrace t;
  t.horizon = 50.0;
  Scalar a = 0.0;
  for (int i = 0; i < 30; ++i) {
    a += rng.exponential(1.0);
    Vec c = rng.normal_vec(2);
    t.events.push_back({a, std::nullopt, c});
  }
  auto spec = eventlog::fit_normalizer(t);
  auto scaled = eventlog::apply_normalizer(spec, t);
  for (int i = 0; i < t.size(); ++i) {
    const Scalar back_a = scaled.events[i].arrival_time * spec.time_scale;
    CHECK(std::abs(back_a - t.events[i].arrival_time) < 1e-12);
    Vec back_c = scaled.events[i].covariates.cwiseProduct(spec.covariate_stds) +
                 spec.covariate_means;
    CHECK((back_c - t.events[i].covariates).cwiseAbs().maxCoeff() < 1e-12);
  }
}
