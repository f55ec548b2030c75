#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "adaneg/error.hpp"
#include "adaneg/pipeline.hpp"

namespace adaneg {

namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return v;
}

// Uniform direction supported on coordinates [begin, end).
std::vector<double> random_direction(Rng& rng, std::size_t dim, std::size_t begin, std::size_t end) {
  for (;;) {
    std::vector<double> v(dim, 0.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = begin; i < end; ++i) v[i] = normal(rng);
    const double n = l2_norm(v);
    if (n > 1e-9) {
      for (double& x : v) x /= n;
      return v;
    }
  }
}

// Wood (1994) rejection sampler for the von Mises-Fisher distribution.
std::vector<double> sample_vmf(Rng& rng, std::span<const double> mean, double kappa) {
  const std::size_t dim = mean.size();
  if (std::isinf(kappa)) return {mean.begin(), mean.end()};
  if (dim < 2) return {mean.begin(), mean.end()};

  const double m = static_cast<double>(dim - 1);
  double w = 0.0;
  if (kappa <= 0.0) {
    // Uniform on the sphere.
    const auto u = random_direction(rng, dim, 0, dim);
    w = dot(u, mean);
  } else {
    const double b = m / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m * m));
    const double x0 = (1.0 - b) / (1.0 + b);
    const double c = kappa * x0 + m * std::log(1.0 - x0 * x0);
    std::gamma_distribution<double> gamma(m / 2.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (;;) {
      const double g1 = gamma(rng);
      const double g2 = gamma(rng);
      const double z = g1 / (g1 + g2);
      w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
      const double u = uniform(rng);
      if (kappa * w + m * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
    }
  }

  // Tangent direction: a Gaussian with the mean component removed.
  std::vector<double> tangent;
  for (;;) {
    tangent = gaussian_vector(rng, dim);
    const double along = dot(tangent, mean);
    for (std::size_t i = 0; i < dim; ++i) tangent[i] -= along * mean[i];
    const double n = l2_norm(tangent);
    if (n > 1e-9) {
      for (double& x : tangent) x /= n;
      break;
    }
  }
  const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = w * mean[i] + s * tangent[i];
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); };
  if (id_classes < 1 || neg_classes < 1) fail("need at least one ID and one negative class");
  if (dim < 2) fail("dim must be >= 2");
  if (text_dim > dim) fail("text_dim must not exceed dim");
  if (!(alignment >= 0.0 && alignment <= 1.0)) fail("alignment must lie in [0, 1]");
  if (!(modality_gap >= 0.0 && modality_gap < 1.0)) fail("modality_gap must lie in [0, 1)");
  if (!(id_concentration >= 0.0) || !(ood_concentration >= 0.0)) fail("concentrations must be >= 0");
  if (n_ood > 0 && ood_clusters < 1) fail("need at least one OOD cluster");
  const std::size_t text_span = text_dim == 0 ? dim : text_dim;
  const auto aligned = static_cast<std::size_t>(std::llround(alignment * static_cast<double>(ood_clusters)));
  // The complement of the text subspace hosts the modality direction (one
  // coordinate) and the misaligned OOD centres (the rest).
  const std::size_t reserved = modality_gap > 0.0 ? 1 : 0;
  if (aligned < ood_clusters && text_span + reserved >= dim)
    fail("misaligned OOD clusters need text_dim < dim (minus one with a modality gap)");
  if (reserved && text_span == dim) fail("a modality gap needs text_dim < dim");
}

Dataset synthesize_dataset(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t dim = spec.dim;
  const std::size_t text_span = spec.text_dim == 0 ? dim : spec.text_dim;

  EmbeddingMatrix id_rows(dim), neg_rows(dim);
  for (std::size_t i = 0; i < spec.id_classes; ++i) id_rows.push_back(random_direction(rng, dim, 0, text_span));
  for (std::size_t i = 0; i < spec.neg_classes; ++i) neg_rows.push_back(random_direction(rng, dim, 0, text_span));

  Dataset ds;
  ds.proxies = build_proxy_matrix(id_rows, neg_rows);
  for (std::size_t i = 0; i < spec.id_classes; ++i) ds.id_label_names.push_back("id_" + std::to_string(i));
  for (std::size_t i = 0; i < spec.neg_classes; ++i) ds.neg_label_names.push_back("neg_" + std::to_string(i));

  // Coordinate text_span carries the shared image-only direction.
  const std::size_t modality_coord = spec.modality_gap > 0.0 ? 1 : 0;
  const auto image_feature = [&](std::vector<double> x) {
    if (spec.modality_gap > 0.0) {
      const double keep = std::sqrt(1.0 - spec.modality_gap * spec.modality_gap);
      for (double& c : x) c *= keep;
      x[text_span] += spec.modality_gap;
    }
    return x;
  };

  // The first round(alignment * K) clusters sit on negative proxies, the rest
  // in the complement of the text subspace.
  const auto aligned = static_cast<std::size_t>(std::llround(spec.alignment * static_cast<double>(spec.ood_clusters)));
  std::vector<std::vector<double>> centres;
  std::uniform_int_distribution<std::size_t> pick_neg(0, spec.neg_classes - 1);
  for (std::size_t k = 0; k < spec.ood_clusters; ++k) {
    if (k < aligned) {
      const auto row = ds.proxies.row(spec.id_classes + pick_neg(rng));
      centres.emplace_back(row.begin(), row.end());
    } else {
      centres.push_back(random_direction(rng, dim, text_span + modality_coord, dim));
    }
  }

  // Interleave ID and OOD samples in a seeded random order.
  std::vector<bool> is_id(spec.n_id + spec.n_ood, false);
  std::fill(is_id.begin(), is_id.begin() + static_cast<std::ptrdiff_t>(spec.n_id), true);
  std::shuffle(is_id.begin(), is_id.end(), rng);

  std::uniform_int_distribution<std::size_t> pick_class(0, spec.id_classes - 1);
  std::uniform_int_distribution<std::size_t> pick_cluster(0, spec.ood_clusters == 0 ? 0 : spec.ood_clusters - 1);
  std::vector<GroundTruth> truth;
  truth.reserve(is_id.size());
  ds.stream = EmbeddingMatrix(dim);
  for (bool id : is_id) {
    if (id) {
      const std::size_t y = pick_class(rng);
      ds.stream.push_back(image_feature(sample_vmf(rng, ds.proxies.row(y), spec.id_concentration)));
      truth.push_back(GroundTruth::id(y));
    } else {
      const std::size_t k = pick_cluster(rng);
      ds.stream.push_back(image_feature(sample_vmf(rng, centres[k], spec.ood_concentration)));
      truth.push_back(GroundTruth::ood("synthetic"));
    }
  }
  ds.ground_truth = std::move(truth);
  return ds;
}

SyntheticSpec misaligned_benchmark(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.id_classes = 50;
  spec.neg_classes = 200;
  spec.dim = 64;
  spec.text_dim = 48;
  spec.id_concentration = 40.0;
  spec.ood_clusters = 10;
  spec.ood_concentration = 40.0;
  spec.alignment = 0.0;
  spec.n_id = 5000;
  spec.n_ood = 5000;
  spec.seed = seed;
  return spec;
}

}  // namespace adaneg
