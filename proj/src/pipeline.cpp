#include "adaneg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "adaneg/error.hpp"
#include "adaneg/scoring.hpp"
#include "json.hpp"

namespace adaneg {

const char* to_string(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::Nl: return "nl";
    case ScoreMode::Ta: return "ta";
    case ScoreMode::Sa: return "sa";
    case ScoreMode::All: return "all";
  }
  return "all";
}

ScoreMode parse_score_mode(const std::string& text) {
  if (text == "nl") return ScoreMode::Nl;
  if (text == "ta") return ScoreMode::Ta;
  if (text == "sa") return ScoreMode::Sa;
  if (text == "all") return ScoreMode::All;
  throw Error(ErrorKind::ConfigInvalid, "mode must be one of nl, ta, sa, all; got '" + text + "'");
}

void RunConfig::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (!(gap >= 0.0 && gap <= 1.0)) fail("gap must lie in [0, 1]");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must be > 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be > 0");
  if (mem_len < 1) fail("mem_len must be >= 1");
  if (adagap.queue_len < 1) fail("adagap.queue_len must be >= 1");
}

RunConfig parse_run_config(const std::string& json_text, RunConfig base) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
    if (!doc.is_object()) throw Error(ErrorKind::ConfigInvalid, "config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "gamma") base.gamma = value.get<double>();
      else if (key == "gap") base.gap = value.get<double>();
      else if (key == "beta") base.beta = value.get<double>();
      else if (key == "lambda") base.lambda = value.get<double>();
      else if (key == "tau") base.tau = value.get<double>();
      else if (key == "mem_len") base.mem_len = value.get<std::size_t>();
      else if (key == "mode") base.mode = parse_score_mode(value.get<std::string>());
      else if (key == "fuse") {
        const auto f = value.get<std::string>();
        if (f == "sa") base.fuse = FuseSource::SampleAdaptive;
        else if (f == "ta") base.fuse = FuseSource::TaskAdaptive;
        else throw Error(ErrorKind::ConfigInvalid, "fuse must be 'sa' or 'ta'");
      } else if (key == "score_before_cache") base.score_before_cache = value.get<bool>();
      else if (key == "seed") {
        if (value.is_null()) base.seed.reset();
        else base.seed = value.get<std::uint64_t>();
      } else if (key == "adagap") {
        for (const auto& [k, v] : value.items()) {
          if (k == "enabled") base.adagap.enabled = v.get<bool>();
          else if (k == "queue_len") base.adagap.queue_len = v.get<std::size_t>();
          else if (k == "estimate") {
            const auto e = v.get<std::string>();
            if (e == "threshold") base.adagap.estimate = MixEstimate::Threshold;
            else if (e == "gapped") base.adagap.estimate = MixEstimate::Gapped;
            else throw Error(ErrorKind::ConfigInvalid, "adagap.estimate must be 'threshold' or 'gapped'");
          } else throw Error(ErrorKind::ConfigInvalid, "unknown adagap key '" + k + "'");
        }
      } else {
        throw Error(ErrorKind::ConfigInvalid, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, e.what());
  }
  base.validate();
  return base;
}

std::string run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json doc;
  doc["gamma"] = c.gamma;
  doc["gap"] = c.gap;
  doc["beta"] = c.beta;
  doc["lambda"] = c.lambda;
  doc["tau"] = c.tau;
  doc["mem_len"] = c.mem_len;
  doc["mode"] = to_string(c.mode);
  doc["fuse"] = c.fuse == FuseSource::SampleAdaptive ? "sa" : "ta";
  doc["score_before_cache"] = c.score_before_cache;
  doc["seed"] = c.seed ? nlohmann::ordered_json(*c.seed) : nlohmann::ordered_json();
  doc["adagap"] = {{"enabled", c.adagap.enabled},
                   {"queue_len", c.adagap.queue_len},
                   {"estimate", c.adagap.estimate == MixEstimate::Threshold ? "threshold" : "gapped"}};
  return doc.dump(2);
}

// ---- StreamRunner ----

StreamRunner::StreamRunner(RunConfig config, const ProxyMatrix& proxies)
    : StreamRunner(config, proxies, TaskAwareMemory(proxies.id_count(), proxies.neg_count(), config.mem_len, proxies.dim())) {}

StreamRunner::StreamRunner(RunConfig config, const ProxyMatrix& proxies, TaskAwareMemory warm_start)
    : config_(std::move(config)),
      proxies_(proxies),
      memory_(std::move(warm_start)),
      estimator_(config_.adagap.queue_len),
      posteriors_(proxies.size()),
      row_buffer_(proxies.dim()) {
  config_.validate();
  if (memory_.id_count() != proxies.id_count() || memory_.neg_count() != proxies.neg_count() ||
      memory_.dim() != proxies.dim() || memory_.length() != config_.mem_len)
    throw Error(ErrorKind::DimensionMismatch, "memory shape does not match proxies and mem_len");
  if (needs_task_adaptive()) task_adaptive_ = task_adaptive_proxies(memory_, proxies_);
}

bool StreamRunner::needs_task_adaptive() const {
  return config_.mode == ScoreMode::Ta || config_.mode == ScoreMode::All;
}

bool StreamRunner::needs_sample_adaptive() const {
  return config_.mode == ScoreMode::Sa || config_.mode == ScoreMode::All;
}

void StreamRunner::cache(const SampleRecord& record, std::span<const double> v) {
  if (record.cache.kind == CacheKind::Skip) return;
  const std::size_t y = *record.cache.target_class;
  const InsertResult result = memory_.insert(y, v, binary_entropy(record.s_nl));
  if (result.outcome != InsertOutcome::Rejected && needs_task_adaptive()) {
    task_adaptive_row(memory_, proxies_, y, row_buffer_);
    task_adaptive_.replace_row(y, row_buffer_);
  }
}

SampleRecord StreamRunner::step(std::size_t index, std::span<const double> v) {
  if (v.size() != proxies_.dim())
    throw Error(ErrorKind::DimensionMismatch, "sample " + std::to_string(index) + " has dim " +
                                                  std::to_string(v.size()) + ", proxies have " +
                                                  std::to_string(proxies_.dim()));
  SampleRecord rec;
  rec.index = index;

  class_posteriors(v, proxies_, config_.tau, posteriors_);
  rec.s_nl = id_mass(posteriors_, proxies_.id_count());
  rec.pseudo_label = pseudo_label(posteriors_, proxies_.id_count(), rec.s_nl < config_.gamma);

  if (config_.adagap.enabled) {
    const double mr = estimator_.mix_ratio();
    rec.mix_ratio = mr;
    rec.cache.kind = adaptive_decision(rec.s_nl, config_.gamma, config_.gap, mr);
    if (config_.adagap.estimate == MixEstimate::Threshold) {
      estimator_.record(rec.s_nl >= config_.gamma);
    } else {
      const CacheKind side = caching_decision(rec.s_nl, config_.gamma, config_.gap);
      if (side != CacheKind::Skip) estimator_.record(side == CacheKind::CachePositive);
    }
  } else {
    rec.cache.kind = caching_decision(rec.s_nl, config_.gamma, config_.gap);
  }
  if (rec.cache.kind != CacheKind::Skip) {
    rec.cache.target_class =
        pseudo_label(posteriors_, proxies_.id_count(), rec.cache.kind == CacheKind::CacheNegative);
  }

  if (!config_.score_before_cache) cache(rec, v);

  if (needs_task_adaptive()) rec.s_ta = proxy_score(v, task_adaptive_, config_.tau);
  if (needs_sample_adaptive())
    rec.s_sa = proxy_score(v, sample_adaptive_proxies(memory_, proxies_, v, config_.beta), config_.tau);

  switch (config_.mode) {
    case ScoreMode::Nl: rec.s_all = rec.s_nl; break;
    case ScoreMode::Ta: rec.s_all = *rec.s_ta; break;
    case ScoreMode::Sa: rec.s_all = *rec.s_sa; break;
    case ScoreMode::All:
      rec.s_all = combined_score(rec.s_nl, config_.fuse == FuseSource::SampleAdaptive ? *rec.s_sa : *rec.s_ta,
                                 config_.lambda);
      break;
  }

  if (config_.score_before_cache) cache(rec, v);
  return rec;
}

std::vector<std::size_t> stream_order(std::size_t n, std::optional<std::uint64_t> seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (seed) {
    std::mt19937_64 rng(*seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

std::optional<MetricReport> records_metrics(std::span<const SampleRecord> records) {
  std::vector<LabelledScore> labelled;
  labelled.reserve(records.size());
  for (const auto& r : records) {
    if (!r.truth) return std::nullopt;
    labelled.push_back({r.s_all, r.pseudo_label, r.truth->is_id(), r.truth->class_index, r.truth->dataset});
  }
  if (labelled.empty()) return std::nullopt;
  return evaluate(labelled);
}

RunResult run_stream(const RunConfig& config, const ProxyMatrix& proxies, const EmbeddingMatrix& stream,
                     std::span<const GroundTruth> truth) {
  config.validate();
  if (!stream.empty() && stream.dim() != proxies.dim())
    throw Error(ErrorKind::DimensionMismatch, "stream dim " + std::to_string(stream.dim()) + " vs proxy dim " +
                                                  std::to_string(proxies.dim()));
  if (!truth.empty() && truth.size() != stream.rows())
    throw Error(ErrorKind::LengthMismatch, "ground truth length does not match stream");

  StreamRunner runner(config, proxies);
  RunResult result;
  result.records.reserve(stream.rows());
  for (std::size_t i : stream_order(stream.rows(), config.seed)) {
    SampleRecord rec = runner.step(i, stream.row(i));
    if (rec.cache.kind == CacheKind::CacheNegative) ++result.cached_negative;
    if (rec.cache.kind == CacheKind::CachePositive) ++result.cached_positive;
    result.records.push_back(std::move(rec));
  }
  // Ground truth is attached only after the stream has been scored.
  if (!truth.empty()) {
    for (auto& rec : result.records) rec.truth = truth[rec.index];
    result.metrics = records_metrics(result.records);
  }
  result.occupancy = occupancy_report(runner.memory());
  return result;
}

RunResult run_stream(const RunConfig& config, const Dataset& dataset) {
  if (dataset.ground_truth) return run_stream(config, dataset.proxies, dataset.stream, *dataset.ground_truth);
  return run_stream(config, dataset.proxies, dataset.stream);
}

}  // namespace adaneg
