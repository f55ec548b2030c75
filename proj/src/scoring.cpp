#include "adaneg/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adaneg/error.hpp"

namespace adaneg {

namespace {

void check_dims(std::span<const double> v, const ProxyMatrix& proxies) {
  if (v.size() != proxies.dim())
    throw Error(ErrorKind::DimensionMismatch,
                "vector dim " + std::to_string(v.size()) + " vs proxy dim " + std::to_string(proxies.dim()));
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorKind::ConfigInvalid, "tau must be a positive finite value");
}

// Fills out[i] = cos(v, c_i)/tau and returns the maximum.
double scaled_logits(std::span<const double> v, const ProxyMatrix& proxies, double tau, std::span<double> out) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    out[i] = dot(v, proxies.row(i)) / tau;
    max_logit = std::max(max_logit, out[i]);
  }
  return max_logit;
}

}  // namespace

void ScoreConfig::validate() const {
  check_tau(tau);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::ConfigInvalid, "lambda must be >= 0");
}

void class_posteriors(std::span<const double> v, const ProxyMatrix& proxies, double tau, std::span<double> out) {
  check_dims(v, proxies);
  check_tau(tau);
  if (out.size() != proxies.size()) throw Error(ErrorKind::LengthMismatch, "posterior buffer must hold C+M entries");
  const double max_logit = scaled_logits(v, proxies, tau, out);
  double total = 0.0;
  for (double& x : out) {
    x = std::exp(x - max_logit);
    total += x;
  }
  for (double& x : out) x /= total;
}

std::vector<double> class_posteriors(std::span<const double> v, const ProxyMatrix& proxies, double tau) {
  std::vector<double> out(proxies.size());
  class_posteriors(v, proxies, tau, out);
  return out;
}

double id_mass(std::span<const double> posteriors, std::size_t id_count) {
  double s = 0.0;
  for (std::size_t i = 0; i < id_count; ++i) s += posteriors[i];
  // The negative block always holds positive mass, so the exact value is
  // below 1; the sum rounds to 1.0 once that mass drops under half an ulp.
  return std::min(s, std::nextafter(1.0, 0.0));
}

double neglabel_score(std::span<const double> v, const ProxyMatrix& proxies, double tau) {
  return id_mass(class_posteriors(v, proxies, tau), proxies.id_count());
}

std::size_t pseudo_label(std::span<const double> posteriors, std::size_t id_count, bool is_negative) {
  const auto first = posteriors.begin() + static_cast<std::ptrdiff_t>(is_negative ? id_count : 0);
  const auto last = is_negative ? posteriors.end() : posteriors.begin() + static_cast<std::ptrdiff_t>(id_count);
  // max_element returns the first maximum, which is the lowest index.
  return static_cast<std::size_t>(std::max_element(first, last) - posteriors.begin());
}

double proxy_score(std::span<const double> v, const ProxyMatrix& proxies, double tau) {
  check_dims(v, proxies);
  check_tau(tau);
  std::vector<double> logits(proxies.size());
  const double max_logit = scaled_logits(v, proxies, tau, logits);
  double id_sum = 0.0;
  double neg_sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = std::exp(logits[i] - max_logit);
    (i < proxies.id_count() ? id_sum : neg_sum) += e;
  }
  return id_sum / (id_sum + neg_sum);
}

double binary_entropy(double s) {
  const double p = std::clamp(s, kEntropyClamp, 1.0 - kEntropyClamp);
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

}  // namespace adaneg
