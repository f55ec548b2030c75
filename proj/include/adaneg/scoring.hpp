#pragma once

// Stateless scoring kernels over cosine similarities. Every input vector is
// expected unit-norm, so cos(v, c) is the plain dot product.

#include <cstddef>
#include <span>
#include <vector>

#include "adaneg/embeddings.hpp"

namespace adaneg {

struct ScoreConfig {
  double tau = 0.01;    // softmax temperature
  double lambda = 0.1;  // weight of the image-proxy score in the fused score

  void validate() const;
};

/// softmax(v C^T / tau) over all C+M proxies, max-subtracted.
std::vector<double> class_posteriors(std::span<const double> v, const ProxyMatrix& proxies, double tau);
void class_posteriors(std::span<const double> v, const ProxyMatrix& proxies, double tau, std::span<double> out);

/// Sum of the ID block of the posteriors, capped at the largest double below 1.
double neglabel_score(std::span<const double> v, const ProxyMatrix& proxies, double tau);
double id_mass(std::span<const double> posteriors, std::size_t id_count);

/// Closest label: argmax over [C, C+M) when is_negative (absolute index),
/// else argmax over [0, C). Ties resolve to the lowest index.
std::size_t pseudo_label(std::span<const double> posteriors, std::size_t id_count, bool is_negative);

/// sum_{i<C} e^{cos(v,c_i)/tau} / sum_{all} e^{cos(v,c_i)/tau}.
double proxy_score(std::span<const double> v, const ProxyMatrix& proxies, double tau);

inline double combined_score(double s_nl, double s_adaptive, double lambda) { return s_nl + lambda * s_adaptive; }

inline constexpr double kEntropyClamp = 1e-12;

/// -s ln s - (1-s) ln(1-s) in nats, with s clamped to [1e-12, 1-1e-12].
double binary_entropy(double s);

}  // namespace adaneg
