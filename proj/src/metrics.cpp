#include "adaneg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

#include "adaneg/error.hpp"
#include "adaneg/scoring.hpp"
#include "json.hpp"

namespace adaneg {

namespace {

void check_population(const ScoredPopulation& pop) {
  if (pop.id_scores.empty() || pop.ood_scores.empty())
    throw Error(ErrorKind::EmptyPopulation, "need at least one ID and one OOD score");
  const auto finite = [](double x) { return std::isfinite(x); };
  if (!std::all_of(pop.id_scores.begin(), pop.id_scores.end(), finite) ||
      !std::all_of(pop.ood_scores.begin(), pop.ood_scores.end(), finite))
    throw Error(ErrorKind::NonFiniteValue, "scores must be finite");
}

}  // namespace

double auroc(const ScoredPopulation& pop) {
  check_population(pop);
  const std::size_t n_id = pop.id_scores.size();
  const std::size_t n = n_id + pop.ood_scores.size();

  std::vector<std::pair<double, bool>> all;
  all.reserve(n);
  for (double s : pop.id_scores) all.emplace_back(s, true);
  for (double s : pop.ood_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Twice the midrank keeps everything integral.
  std::uint64_t id_rank_sum_x2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    const std::uint64_t midrank_x2 = i + 1 + j;  // (i+1) + j = first + last 1-based rank
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) id_rank_sum_x2 += midrank_x2;
    i = j;
  }
  const double u = static_cast<double>(id_rank_sum_x2) / 2.0 - static_cast<double>(n_id) * (n_id + 1) / 2.0;
  return u / (static_cast<double>(n_id) * static_cast<double>(pop.ood_scores.size()));
}

double fpr_at_tpr(const ScoredPopulation& pop, unsigned tpr_percent) {
  check_population(pop);
  if (tpr_percent == 0 || tpr_percent > 100) throw Error(ErrorKind::ConfigInvalid, "TPR percent must be in 1..100");
  std::vector<double> id = pop.id_scores;
  std::sort(id.begin(), id.end(), std::greater<>());
  const std::size_t needed = (tpr_percent * id.size() + 99) / 100;  // ceil
  const double threshold = id[needed - 1];
  const auto above = std::count_if(pop.ood_scores.begin(), pop.ood_scores.end(),
                                   [threshold](double s) { return s >= threshold; });
  return static_cast<double>(above) / static_cast<double>(pop.ood_scores.size());
}

double id_accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.size() != truth.size()) throw Error(ErrorKind::LengthMismatch, "prediction and truth lengths differ");
  if (truth.empty()) throw Error(ErrorKind::EmptyPopulation, "no ID samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double isor(std::span<const double> proxy, const EmbeddingMatrix& id_proxies, const EmbeddingMatrix& ood_truth,
            double tau) {
  const ProxyMatrix reference = build_proxy_matrix(id_proxies, ood_truth);
  return neglabel_score(proxy, reference, tau);
}

std::vector<double> isor_rows(const EmbeddingMatrix& proxies, const EmbeddingMatrix& id_proxies,
                              const EmbeddingMatrix& ood_truth, double tau) {
  const ProxyMatrix reference = build_proxy_matrix(id_proxies, ood_truth);
  std::vector<double> out(proxies.rows());
  for (std::size_t i = 0; i < proxies.rows(); ++i) out[i] = neglabel_score(proxies.row(i), reference, tau);
  return out;
}

MetricReport evaluate(std::span<const LabelledScore> samples) {
  MetricReport report;
  ScoredPopulation pop;
  std::map<std::string, std::vector<double>> by_dataset;
  std::vector<std::size_t> predicted;
  std::vector<std::size_t> truth;
  for (const auto& s : samples) {
    if (s.is_id) {
      pop.id_scores.push_back(s.score);
      predicted.push_back(s.pseudo_label);
      truth.push_back(s.true_class);
    } else {
      pop.ood_scores.push_back(s.score);
      by_dataset[s.dataset.empty() ? "ood" : s.dataset].push_back(s.score);
    }
  }
  report.n_id = pop.id_scores.size();
  report.n_ood = pop.ood_scores.size();
  if (report.n_id > 0) report.id_acc = id_accuracy(predicted, truth);
  if (report.n_id > 0 && report.n_ood > 0) {
    report.auroc = auroc(pop);
    report.fpr95 = fpr_at_95_tpr(pop);
    for (auto& [name, scores] : by_dataset) {
      const ScoredPopulation sub{pop.id_scores, scores};
      report.per_dataset.push_back({name, auroc(sub), fpr_at_95_tpr(sub), scores.size()});
    }
  }
  return report;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json doc;
  const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  doc["auroc"] = opt(auroc);
  doc["fpr95"] = opt(fpr95);
  doc["id_acc"] = opt(id_acc);
  doc["n_id"] = n_id;
  doc["n_ood"] = n_ood;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : per_dataset)
    arr.push_back({{"dataset", d.dataset}, {"auroc", d.auroc}, {"fpr95", d.fpr95}, {"n_ood", d.n_ood}});
  doc["per_dataset"] = std::move(arr);
  return doc.dump(2);
}

}  // namespace adaneg
