#include <doctest.h>

#include <deque>
#include <random>

#include "adaneg/adagap.hpp"
#include "adaneg/error.hpp"
#include "test_util.hpp"

using namespace adaneg;

TEST_CASE("FIFO eviction and mix ratio examples") {
  MixRatioEstimator e(3);
  CHECK(e.mix_ratio() == 0.5);
  for (bool b : {true, true, false, false}) e.record(b);
  CHECK(e.window() == std::deque<bool>{true, false, false});
  CHECK(e.mix_ratio() == doctest::Approx(1.0 / 3.0));

  MixRatioEstimator f(10);
  for (bool b : {true, true, false, false}) f.record(b);
  CHECK(f.mix_ratio() == 0.5);
  MixRatioEstimator g(10);
  for (int i = 0; i < 4; ++i) g.record(true);
  CHECK(g.mix_ratio() == 1.0);

  CHECK(MixRatioEstimator().capacity() == 10000);
  CHECK(test_util::error_kind([] { MixRatioEstimator(0); }) == ErrorKind::ConfigInvalid);
}

TEST_CASE("estimator counts match a recount after many mixed records") {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.3);
  MixRatioEstimator e(257);
  std::deque<bool> mirror;
  for (int i = 0; i < 100000; ++i) {
    const bool b = coin(rng);
    e.record(b);
    mirror.push_back(b);
    if (mirror.size() > 257) mirror.pop_front();
    if (i % 997 == 0 || i == 99999) {
      std::size_t ids = 0;
      for (bool x : e.window()) ids += x;
      CHECK(e.id_count() == ids);
      CHECK(e.size() <= 257);
      CHECK(e.window() == mirror);
      CHECK(e.mix_ratio() == doctest::Approx(static_cast<double>(ids) / static_cast<double>(e.size())));
    }
  }
}

TEST_CASE("adaptive_decision") {
  SUBCASE("MR = 0.5 reduces to the base criterion at g = 0.5") {
    for (int i = 0; i <= 1000; ++i) {
      const double s = i / 1000.0;
      CHECK(adaptive_decision(s, 0.5, 0.5, 0.5) == caching_decision(s, 0.5, 0.5));
    }
  }
  SUBCASE("extremes") {
    for (int i = 0; i < 1000; ++i) {
      const double s = i / 1000.0;
      CHECK(adaptive_decision(s, 0.5, 0.5, 1.0) != CacheKind::CacheNegative);
      CHECK(adaptive_decision(s, 0.5, 0.5, 0.0) != CacheKind::CachePositive);
    }
  }
  SUBCASE("never caches what the base criterion skips, monotone in MR") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20000; ++t) {
      const double s = u(rng), gamma = 0.05 + 0.9 * u(rng), g = u(rng);
      const double mr_lo = u(rng), mr_hi = mr_lo + (1.0 - mr_lo) * u(rng);
      const CacheKind base = caching_decision(s, gamma, g);
      const CacheKind lo = adaptive_decision(s, gamma, g, mr_lo);
      const CacheKind hi = adaptive_decision(s, gamma, g, mr_hi);
      if (base == CacheKind::Skip) CHECK(lo == CacheKind::Skip);
      if (lo != CacheKind::Skip) CHECK(lo == base);
      if (lo != CacheKind::CacheNegative) CHECK(hi != CacheKind::CacheNegative);
      if (hi == CacheKind::CacheNegative) CHECK(lo == CacheKind::CacheNegative);
    }
  }
}
