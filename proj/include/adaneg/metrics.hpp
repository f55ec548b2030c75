#pragma once

// Detection metrics (AUROC, FPR at 95% TPR), ID accuracy and the ISOR
// proxy-alignment diagnostic. Higher scores mean "more in-distribution".

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaneg/embeddings.hpp"

namespace adaneg {

struct ScoredPopulation {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

/// P(id > ood) + 0.5 P(id == ood), via midranks in O(n log n).
double auroc(const ScoredPopulation& pop);

/// OOD false-positive rate at the largest threshold t keeping at least
/// `tpr` of ID scores >= t. tpr_percent is an integer percentage.
double fpr_at_tpr(const ScoredPopulation& pop, unsigned tpr_percent);
inline double fpr_at_95_tpr(const ScoredPopulation& pop) { return fpr_at_tpr(pop, 95); }

double id_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);

/// NegLabel-form score of `proxy` with ground-truth OOD label embeddings in
/// place of the negative block. Lower means closer to the OOD labels.
double isor(std::span<const double> proxy, const EmbeddingMatrix& id_proxies, const EmbeddingMatrix& ood_truth,
            double tau);
/// ISOR of every row of `proxies` against one (ID, OOD-truth) pair.
std::vector<double> isor_rows(const EmbeddingMatrix& proxies, const EmbeddingMatrix& id_proxies,
                              const EmbeddingMatrix& ood_truth, double tau);

struct DatasetMetrics {
  std::string dataset;
  double auroc = 0.0;
  double fpr95 = 0.0;
  std::size_t n_ood = 0;
};

struct MetricReport {
  std::optional<double> auroc;
  std::optional<double> fpr95;
  std::optional<double> id_acc;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::vector<DatasetMetrics> per_dataset;  // ID scores vs each named OOD subset

  std::string to_json() const;
};

/// One labelled observation: its score, its closest label, and its truth.
struct LabelledScore {
  double score = 0.0;
  std::size_t pseudo_label = 0;
  bool is_id = false;
  std::size_t true_class = 0;  // ID only
  std::string dataset;         // OOD only
};

/// ID accuracy counts an ID sample as correct only if its closest label is
/// its true class, so ID samples detected as OOD count as errors.
MetricReport evaluate(std::span<const LabelledScore> samples);

}  // namespace adaneg
