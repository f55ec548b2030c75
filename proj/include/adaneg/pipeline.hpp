#pragma once

// Streaming detection over a test set, synthetic data generation, and the
// experiment drivers (sweeps, mixture ratios, ordering seeds).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaneg/adagap.hpp"
#include "adaneg/embeddings.hpp"
#include "adaneg/memory.hpp"
#include "adaneg/metrics.hpp"

namespace adaneg {

// nl: text proxies only; ta / sa: the task- or sample-adaptive score alone;
// all: s_nl + lambda * (s_sa, or s_ta with FuseSource::TaskAdaptive).
enum class ScoreMode { Nl, Ta, Sa, All };
enum class FuseSource { SampleAdaptive, TaskAdaptive };
// What the mix-ratio queue records: s >= gamma (Threshold), or only samples
// outside the caching gap, labelled by side (Gapped).
enum class MixEstimate { Threshold, Gapped };

const char* to_string(ScoreMode mode);
ScoreMode parse_score_mode(const std::string& text);

struct AdaGapConfig {
  bool enabled = false;
  std::size_t queue_len = kDefaultQueueLength;
  MixEstimate estimate = MixEstimate::Threshold;
};

struct RunConfig {
  double gamma = 0.5;
  double gap = 0.5;
  double beta = 5.5;
  double lambda = 0.1;
  double tau = 0.01;
  std::size_t mem_len = 10;
  ScoreMode mode = ScoreMode::All;
  FuseSource fuse = FuseSource::SampleAdaptive;
  bool score_before_cache = false;  // ablation: score a sample before caching it
  AdaGapConfig adagap;
  std::optional<std::uint64_t> seed;  // shuffle the stream when set

  void validate() const;  // throws ConfigInvalid
};

/// Overlays keys from a JSON document onto `base`. Keys: gamma, gap, beta,
/// lambda, tau, mem_len, mode, fuse ("sa"|"ta"), score_before_cache, seed,
/// adagap {enabled, queue_len, estimate ("threshold"|"gapped")}.
RunConfig parse_run_config(const std::string& json_text, RunConfig base = {});
std::string run_config_to_json(const RunConfig& config);

struct SampleRecord {
  std::size_t index = 0;  // position in the unshuffled stream
  std::optional<GroundTruth> truth;
  double s_nl = 0.0;
  std::optional<double> s_ta;
  std::optional<double> s_sa;
  double s_all = 0.0;
  std::size_t pseudo_label = 0;
  CacheDecision cache;
  std::optional<double> mix_ratio;  // MR used for the decision, AdaGap only
};

/// Single-stream state: memory bank, mix-ratio queue and the incrementally
/// maintained task-adaptive proxies. Samples must be fed in stream order.
class StreamRunner {
 public:
  StreamRunner(RunConfig config, const ProxyMatrix& proxies);
  StreamRunner(RunConfig config, const ProxyMatrix& proxies, TaskAwareMemory warm_start);

  SampleRecord step(std::size_t index, std::span<const double> v);

  const TaskAwareMemory& memory() const { return memory_; }
  const MixRatioEstimator& estimator() const { return estimator_; }
  const ProxyMatrix& task_adaptive() const { return task_adaptive_; }
  const RunConfig& config() const { return config_; }

 private:
  void cache(const SampleRecord& record, std::span<const double> v);
  bool needs_task_adaptive() const;
  bool needs_sample_adaptive() const;

  RunConfig config_;
  ProxyMatrix proxies_;
  TaskAwareMemory memory_;
  MixRatioEstimator estimator_;
  ProxyMatrix task_adaptive_;
  std::vector<double> posteriors_;
  std::vector<double> row_buffer_;
};

struct RunResult {
  std::vector<SampleRecord> records;  // in processing order
  std::optional<MetricReport> metrics;
  OccupancyReport occupancy;
  std::size_t cached_negative = 0;
  std::size_t cached_positive = 0;
};

/// Runs the whole stream with fresh memory. `truth` may be empty; it is only
/// read by the final metric computation.
RunResult run_stream(const RunConfig& config, const ProxyMatrix& proxies, const EmbeddingMatrix& stream,
                     std::span<const GroundTruth> truth = {});
RunResult run_stream(const RunConfig& config, const Dataset& dataset);

/// Processing order for a stream of n samples: identity, or a seeded shuffle.
std::vector<std::size_t> stream_order(std::size_t n, std::optional<std::uint64_t> seed);

std::optional<MetricReport> records_metrics(std::span<const SampleRecord> records);

// ---- record files ----

/// CSV columns: index,truth,s_nl,s_ta,s_sa,s_all,pseudo_label,cached,mr.
/// truth is "id:<k>", "ood", "ood:<dataset>" or empty.
void write_records_csv(std::ostream& out, std::span<const SampleRecord> records);
std::vector<SampleRecord> read_records_csv(std::istream& in);

// ---- synthetic data ----

struct SyntheticSpec {
  std::size_t id_classes = 50;
  std::size_t neg_classes = 200;
  std::size_t dim = 64;
  // Text proxies live in the first text_dim coordinates; 0 means all of them.
  std::size_t text_dim = 0;
  double id_concentration = 40.0;  // vMF kappa around the class proxy; inf gives the proxy itself
  std::size_t ood_clusters = 10;
  double ood_concentration = 40.0;
  // Fraction of OOD clusters centred on a negative proxy. The remainder are
  // centred orthogonally to every text proxy (requires text_dim < dim).
  double alignment = 0.0;
  // Weight of a shared image-only direction (orthogonal to every text proxy
  // and OOD centre) mixed into each sample; it compresses image-text cosines
  // the way a vision-language modality gap does. 0 disables it.
  double modality_gap = 0.0;
  std::size_t n_id = 5000;
  std::size_t n_ood = 5000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Unit-norm proxies and stream plus ground truth; deterministic in the spec.
Dataset synthesize_dataset(const SyntheticSpec& spec);

/// The desk-scale misaligned benchmark: C=50, M=200, D=64, 5k ID + 5k OOD
/// with OOD centres orthogonal to all text proxies.
SyntheticSpec misaligned_benchmark(std::uint64_t seed);

// ---- experiments ----

struct SweepGrid {
  std::vector<double> gamma;
  std::vector<double> gap;
  std::vector<double> beta;
  std::vector<double> lambda;
  std::vector<std::size_t> mem_len;
  std::vector<ScoreMode> mode;
};

/// Parses "lambda=0,0.1;L=1,5,10;mode=nl,all" (axis names: gamma, gap|g,
/// beta, lambda, mem_len|L, mode).
SweepGrid parse_sweep_grid(const std::string& text);

struct SweepCell {
  RunConfig config;
  std::optional<MetricReport> metrics;
  std::size_t cached = 0;     // samples with a non-Skip decision
  std::size_t occupancy = 0;  // filled slots at end of stream
  std::string error;          // non-empty if the run failed
};

/// One independent run per grid point (cartesian product; empty axes keep
/// the base value). Failures are recorded per cell.
std::vector<SweepCell> sweep(const RunConfig& base, const SweepGrid& grid, const Dataset& dataset);

struct MixtureRatio {
  std::size_t id_parts = 1;
  std::size_t ood_parts = 1;
};
MixtureRatio parse_mixture_ratio(const std::string& text);  // "100:1"

/// Keeps the first n_id ID and n_ood OOD samples in stream order, with the
/// largest counts realizing the ratio. Throws InsufficientSamples.
Dataset subsample_to_ratio(const Dataset& dataset, MixtureRatio ratio);

struct MixtureCell {
  MixtureRatio ratio;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  MetricReport without_adagap;
  MetricReport with_adagap;
};

std::vector<MixtureCell> mixture_experiment(std::span<const MixtureRatio> ratios, const RunConfig& config,
                                            const Dataset& dataset);

struct OrderingResult {
  std::vector<std::uint64_t> seeds;
  std::vector<MetricReport> per_seed;
  double auroc_spread = 0.0;  // max - min
  double fpr95_spread = 0.0;
};

OrderingResult ordering_experiment(const RunConfig& config, const Dataset& dataset,
                                   std::span<const std::uint64_t> seeds);

std::string sweep_to_json(std::span<const SweepCell> cells);
std::string mixture_to_json(std::span<const MixtureCell> cells);
std::string ordering_to_json(const OrderingResult& result);

}  // namespace adaneg
