#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>
#include <thread>

#include "adaneg/error.hpp"
#include "adaneg/pipeline.hpp"
#include "json.hpp"

namespace adaneg {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep))
    if (!part.empty()) parts.push_back(part);
  return parts;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw Error(ErrorKind::ConfigInvalid, "bad number '" + s + "'");
  return v;
}

std::size_t to_size(const std::string& s) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || s.front() == '-')
    throw Error(ErrorKind::ConfigInvalid, "bad count '" + s + "'");
  return static_cast<std::size_t>(v);
}

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

template <typename T>
std::vector<T> or_base(const std::vector<T>& axis, T base) {
  return axis.empty() ? std::vector<T>{base} : axis;
}

nlohmann::ordered_json report_json(const MetricReport& r) { return nlohmann::ordered_json::parse(r.to_json()); }

}  // namespace

SweepGrid parse_sweep_grid(const std::string& text) {
  SweepGrid grid;
  for (const auto& axis : split(text, ';')) {
    const auto eq = axis.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ConfigInvalid, "grid axis '" + axis + "' lacks '='");
    const std::string name = axis.substr(0, eq);
    const auto values = split(axis.substr(eq + 1), ',');
    if (values.empty()) throw Error(ErrorKind::ConfigInvalid, "grid axis '" + name + "' has no values");
    for (const auto& v : values) {
      if (name == "gamma") grid.gamma.push_back(to_double(v));
      else if (name == "gap" || name == "g") grid.gap.push_back(to_double(v));
      else if (name == "beta") grid.beta.push_back(to_double(v));
      else if (name == "lambda") grid.lambda.push_back(to_double(v));
      else if (name == "mem_len" || name == "L") grid.mem_len.push_back(to_size(v));
      else if (name == "mode") grid.mode.push_back(parse_score_mode(v));
      else throw Error(ErrorKind::ConfigInvalid, "unknown grid axis '" + name + "'");
    }
  }
  return grid;
}

std::vector<SweepCell> sweep(const RunConfig& base, const SweepGrid& grid, const Dataset& dataset) {
  std::vector<SweepCell> cells;
  for (double gamma : or_base(grid.gamma, base.gamma))
    for (double gap : or_base(grid.gap, base.gap))
      for (double beta : or_base(grid.beta, base.beta))
        for (double lambda : or_base(grid.lambda, base.lambda))
          for (std::size_t mem_len : or_base(grid.mem_len, base.mem_len))
            for (ScoreMode mode : or_base(grid.mode, base.mode)) {
              SweepCell cell;
              cell.config = base;
              cell.config.gamma = gamma;
              cell.config.gap = gap;
              cell.config.beta = beta;
              cell.config.lambda = lambda;
              cell.config.mem_len = mem_len;
              cell.config.mode = mode;
              cells.push_back(std::move(cell));
            }

  parallel_for(cells.size(), [&](std::size_t i) {
    SweepCell& cell = cells[i];
    try {
      const RunResult result = run_stream(cell.config, dataset);
      cell.metrics = result.metrics;
      cell.cached = result.cached_negative + result.cached_positive;
      cell.occupancy = result.occupancy.total;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  return cells;
}

MixtureRatio parse_mixture_ratio(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error(ErrorKind::ConfigInvalid, "ratio '" + text + "' must look like ID:OOD");
  auto parse_part = [&](const std::string& s) {
    std::string digits = s;
    std::size_t scale = 1;
    if (!digits.empty() && (digits.back() == 'k' || digits.back() == 'K')) {
      digits.pop_back();
      scale = 1000;
    }
    return to_size(digits) * scale;
  };
  MixtureRatio r{parse_part(text.substr(0, colon)), parse_part(text.substr(colon + 1))};
  if (r.id_parts == 0 || r.ood_parts == 0) throw Error(ErrorKind::ConfigInvalid, "ratio parts must be positive");
  return r;
}

Dataset subsample_to_ratio(const Dataset& dataset, MixtureRatio ratio) {
  if (!dataset.ground_truth) throw Error(ErrorKind::InsufficientSamples, "mixture ratios need ground truth");
  if (ratio.id_parts == 0 || ratio.ood_parts == 0) throw Error(ErrorKind::ConfigInvalid, "ratio parts must be positive");
  const std::size_t g = std::gcd(ratio.id_parts, ratio.ood_parts);
  const std::size_t a = ratio.id_parts / g;
  const std::size_t b = ratio.ood_parts / g;

  const auto& truth = *dataset.ground_truth;
  const auto available_id = static_cast<std::size_t>(std::count_if(truth.begin(), truth.end(), [](const auto& t) { return t.is_id(); }));
  const std::size_t available_ood = truth.size() - available_id;
  const std::size_t k = std::min(available_id / a, available_ood / b);
  if (k == 0)
    throw Error(ErrorKind::InsufficientSamples, "cannot realize " + std::to_string(ratio.id_parts) + ":" +
                                                    std::to_string(ratio.ood_parts) + " from " +
                                                    std::to_string(available_id) + " ID and " +
                                                    std::to_string(available_ood) + " OOD samples");
  std::size_t want_id = k * a;
  std::size_t want_ood = k * b;

  Dataset out;
  out.id_label_names = dataset.id_label_names;
  out.neg_label_names = dataset.neg_label_names;
  out.proxies = dataset.proxies;
  out.stream = EmbeddingMatrix(dataset.stream.dim());
  std::vector<GroundTruth> kept;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    std::size_t& budget = truth[i].is_id() ? want_id : want_ood;
    if (budget == 0) continue;
    --budget;
    out.stream.push_back(dataset.stream.row(i));
    kept.push_back(truth[i]);
  }
  out.ground_truth = std::move(kept);
  return out;
}

std::vector<MixtureCell> mixture_experiment(std::span<const MixtureRatio> ratios, const RunConfig& config,
                                            const Dataset& dataset) {
  std::vector<MixtureCell> cells;
  for (const MixtureRatio& ratio : ratios) {
    const Dataset subset = subsample_to_ratio(dataset, ratio);
    MixtureCell cell;
    cell.ratio = ratio;
    for (const auto& t : *subset.ground_truth) (t.is_id() ? cell.n_id : cell.n_ood) += 1;

    RunConfig base = config;
    base.adagap.enabled = false;
    RunConfig adaptive = config;
    adaptive.adagap.enabled = true;
    std::optional<MetricReport> runs[2];
    const RunConfig* configs[2] = {&base, &adaptive};
    parallel_for(2, [&](std::size_t i) { runs[i] = run_stream(*configs[i], subset).metrics; });
    cell.without_adagap = *runs[0];
    cell.with_adagap = *runs[1];
    cells.push_back(std::move(cell));
  }
  return cells;
}

OrderingResult ordering_experiment(const RunConfig& config, const Dataset& dataset,
                                   std::span<const std::uint64_t> seeds) {
  if (seeds.size() < 2) throw Error(ErrorKind::ConfigInvalid, "ordering experiment needs at least two seeds");
  if (!dataset.ground_truth) throw Error(ErrorKind::InsufficientSamples, "ordering experiment needs ground truth");
  OrderingResult result;
  result.seeds.assign(seeds.begin(), seeds.end());
  std::vector<std::optional<MetricReport>> reports(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    RunConfig c = config;
    c.seed = seeds[i];
    reports[i] = run_stream(c, dataset).metrics;
  });
  for (auto& r : reports) {
    if (!r || !r->auroc) throw Error(ErrorKind::InsufficientSamples, "ordering experiment needs ID and OOD samples");
    result.per_seed.push_back(*r);
  }
  const auto [amin, amax] = std::minmax_element(result.per_seed.begin(), result.per_seed.end(),
                                                [](const auto& a, const auto& b) { return *a.auroc < *b.auroc; });
  const auto [fmin, fmax] = std::minmax_element(result.per_seed.begin(), result.per_seed.end(),
                                                [](const auto& a, const auto& b) { return *a.fpr95 < *b.fpr95; });
  result.auroc_spread = *amax->auroc - *amin->auroc;
  result.fpr95_spread = *fmax->fpr95 - *fmin->fpr95;
  return result;
}

std::string sweep_to_json(std::span<const SweepCell> cells) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json e;
    e["gamma"] = c.config.gamma;
    e["gap"] = c.config.gap;
    e["beta"] = c.config.beta;
    e["lambda"] = c.config.lambda;
    e["mem_len"] = c.config.mem_len;
    e["mode"] = to_string(c.config.mode);
    e["metrics"] = c.metrics ? report_json(*c.metrics) : nlohmann::ordered_json();
    e["cached"] = c.cached;
    e["occupancy"] = c.occupancy;
    e["error"] = c.error.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(c.error);
    arr.push_back(std::move(e));
  }
  return arr.dump(2);
}

std::string mixture_to_json(std::span<const MixtureCell> cells) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json e;
    e["ratio"] = std::to_string(c.ratio.id_parts) + ":" + std::to_string(c.ratio.ood_parts);
    e["n_id"] = c.n_id;
    e["n_ood"] = c.n_ood;
    e["fpr95"] = c.without_adagap.fpr95 ? nlohmann::ordered_json(*c.without_adagap.fpr95) : nlohmann::ordered_json();
    e["fpr95_adagap"] = c.with_adagap.fpr95 ? nlohmann::ordered_json(*c.with_adagap.fpr95) : nlohmann::ordered_json();
    e["report"] = report_json(c.without_adagap);
    e["report_adagap"] = report_json(c.with_adagap);
    arr.push_back(std::move(e));
  }
  return arr.dump(2);
}

std::string ordering_to_json(const OrderingResult& result) {
  nlohmann::ordered_json doc;
  auto per_seed = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < result.seeds.size(); ++i)
    per_seed.push_back({{"seed", result.seeds[i]}, {"report", report_json(result.per_seed[i])}});
  doc["per_seed"] = std::move(per_seed);
  doc["auroc_spread"] = result.auroc_spread;
  doc["fpr95_spread"] = result.fpr95_spread;
  return doc.dump(2);
}

}  // namespace adaneg
