#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "adaneg/error.hpp"
#include "adaneg/scoring.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace adaneg;

namespace {

// Proxies in the plane spanned by e0, e1 with given cosines to v = e0.
ProxyMatrix planar(const std::vector<double>& cosines, std::size_t c) {
  std::vector<double> flat;
  for (double x : cosines) {
    flat.push_back(x);
    flat.push_back(std::sqrt(1.0 - x * x));
  }
  return ProxyMatrix(std::move(flat), c, cosines.size() - c, 2);
}

const std::vector<double> kE0 = {1.0, 0.0};

}  // namespace

TEST_CASE("class_posteriors closed forms") {
  SUBCASE("two classes at cosines 0.9 and 0.1") {
    const auto p = class_posteriors(kE0, planar({0.9, 0.1}, 1), 0.01);
    CHECK(std::abs(p[0] - 1.0 / (1.0 + std::exp(-80.0))) <= 1e-12);
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("orthogonal to every proxy gives the uniform vector") {
    std::vector<double> flat;
    for (int i = 0; i < 5; ++i) {
      std::vector<double> r(6, 0.0);
      r[1 + i] = 1.0;
      flat.insert(flat.end(), r.begin(), r.end());
    }
    const ProxyMatrix p(flat, 2, 3, 6);
    const std::vector<double> v = {1, 0, 0, 0, 0, 0};
    for (double x : class_posteriors(v, p, 0.01)) CHECK(x == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("errors") {
    const std::vector<double> v3 = {1, 0, 0};
    CHECK(test_util::error_kind([&] { class_posteriors(v3, planar({0.5, 0.5}, 1), 0.01); }) ==
          ErrorKind::DimensionMismatch);
    CHECK(test_util::error_kind([&] { class_posteriors(kE0, planar({0.5, 0.5}, 1), 0.0); }) ==
          ErrorKind::ConfigInvalid);
  }
}

TEST_CASE("neglabel_score examples") {
  CHECK(neglabel_score(kE0, planar({0.3, 0.3, 0.3, 0.3}, 2), 0.01) == doctest::Approx(0.5).epsilon(1e-15));
  const double s = neglabel_score(kE0, planar({1.0, 0.0}, 1), 0.01);
  CHECK(s == doctest::Approx(1.0 / (1.0 + std::exp(-100.0))).epsilon(1e-15));
  CHECK(s < 1.0);
  const double low = neglabel_score(kE0, planar({0.0, 1.0}, 1), 0.01);
  CHECK(low > 0.0);
  CHECK(low == doctest::Approx(std::exp(-100.0)).epsilon(1e-9));
}

TEST_CASE("pseudo_label examples") {
  const std::vector<double> post = {0.1, 0.2, 0.4, 0.3};
  CHECK(pseudo_label(post, 2, true) == 2);
  CHECK(pseudo_label(post, 2, false) == 1);
  const std::vector<double> tied = {0.3, 0.3, 0.2, 0.2};
  CHECK(pseudo_label(tied, 2, false) == 0);
  CHECK(pseudo_label(tied, 2, true) == 2);
}

TEST_CASE("combined_score and binary_entropy") {
  CHECK(combined_score(0.8, 0.6, 0.0) == 0.8);
  CHECK(combined_score(0.8, 0.6, 0.1) == doctest::Approx(0.86).epsilon(1e-15));
  CHECK(binary_entropy(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(binary_entropy(1e-12) == doctest::Approx(2.8631e-11).epsilon(1e-4));
  CHECK(binary_entropy(0.0) == binary_entropy(1e-12));
  CHECK(binary_entropy(1.0) == doctest::Approx(binary_entropy(1e-12)).epsilon(1e-3));

  // Maximal at 0.5, strictly decreasing toward both ends, symmetric.
  double prev = binary_entropy(0.5);
  for (int i = 1; i < 500; ++i) {
    const double s = 0.5 - i * 0.000999;
    const double h = binary_entropy(s);
    CHECK(h < prev);
    CHECK(std::abs(h - binary_entropy(1.0 - s)) <= 1e-12);
    CHECK(h >= 0.0);
    prev = h;
  }
}

TEST_CASE("scoring kernels match direct summation on random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> cdist(1, 5), mdist(1, 8), ddist(2, 16);
  std::uniform_real_distribution<double> taudist(0.01, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t c = cdist(rng), m = mdist(rng), d = ddist(rng);
    const double tau = taudist(rng);
    const auto rows = oracle::random_rows(rng, c + m, d);
    const auto proxies = oracle::to_proxies(rows, c, m);
    const auto v = oracle::random_unit(rng, d);

    const auto expected = oracle::posteriors(v, rows, tau);
    const auto got = class_posteriors(v, proxies, tau);
    double sum = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i] - expected[i]) <= 1e-9);
      sum += got[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);

    const double ratio = oracle::ratio_score(v, rows, c, tau);
    CHECK(std::abs(neglabel_score(v, proxies, tau) - ratio) <= 1e-9);
    CHECK(std::abs(proxy_score(v, proxies, tau) - ratio) <= 1e-9);
    CHECK(std::abs(proxy_score(v, proxies, tau) - neglabel_score(v, proxies, tau)) <= 1e-9);
  }
}

TEST_CASE("posteriors are invariant to a common shift of the cosines") {
  // Appending sqrt(k) to v and to every proxy, then renormalizing, maps each
  // cosine to (cos + k) / (1 + k). Dividing tau by (1 + k) as well shifts
  // every logit by the same k / tau.
  std::mt19937_64 rng(77);
  for (int t = 0; t < 200; ++t) {
    const std::size_t c = 3, m = 4, d = 8;
    const auto rows = oracle::random_rows(rng, c + m, d);
    const auto v = oracle::random_unit(rng, d);
    const double k = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    const double scale = 1.0 / std::sqrt(1.0 + k);

    oracle::Mat shifted_rows;
    for (auto r : rows) {
      for (double& x : r) x *= scale;
      r.push_back(std::sqrt(k) * scale);
      shifted_rows.push_back(r);
    }
    auto shifted_v = v;
    for (double& x : shifted_v) x *= scale;
    shifted_v.push_back(std::sqrt(k) * scale);
    const double tau = 0.05;
    const auto a = class_posteriors(v, oracle::to_proxies(rows, c, m), tau);
    const auto b = class_posteriors(shifted_v, oracle::to_proxies(shifted_rows, c, m), tau / (1.0 + k));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9);
  }
}

TEST_CASE("pseudo_label is invariant under strictly monotone transforms") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const std::size_t c = 1 + t % 5, m = 1 + t % 7;
    std::vector<double> post(c + m);
    for (double& x : post) x = std::floor(u(rng) * 6.0) / 6.0;  // coarse grid forces ties
    std::vector<double> transformed(post.size());
    std::transform(post.begin(), post.end(), transformed.begin(), [](double x) { return std::exp(3.0 * x) - 7.0; });
    for (bool neg : {false, true}) {
      const std::size_t a = pseudo_label(post, c, neg);
      CHECK(pseudo_label(transformed, c, neg) == a);
      // Brute force: lowest index among the maxima of the searched block.
      const std::size_t lo = neg ? c : 0, hi = neg ? c + m : c;
      std::size_t best = lo;
      for (std::size_t i = lo; i < hi; ++i)
        if (post[i] > post[best]) best = i;
      CHECK(a == best);
    }
  }
}

TEST_CASE("ScoreConfig validation") {
  CHECK_NOTHROW(ScoreConfig{}.validate());
  CHECK(test_util::error_kind([] { ScoreConfig{0.0, 0.1}.validate(); }) == ErrorKind::ConfigInvalid);
  CHECK(test_util::error_kind([] { ScoreConfig{0.01, -1.0}.validate(); }) == ErrorKind::ConfigInvalid);
}
