#pragma once

// Task-aware memory bank: a (C+M) x L x D category-split store of cached
// test features, plus the two proxy generators that read it.
//
// Empty slots are physical zero vectors carrying a +inf entropy sentinel.
// Slots of a class fill front to back and are only ever replaced in place,
// so the filled slots of class y are always [0, occupancy(y)).

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "adaneg/embeddings.hpp"

namespace adaneg {

enum class CacheKind { Skip, CacheNegative, CachePositive };

const char* to_string(CacheKind kind);

struct CacheDecision {
  CacheKind kind = CacheKind::Skip;
  std::optional<std::size_t> target_class;  // set unless kind == Skip
};

/// Gap criterion: CacheNegative iff s < gamma - g*gamma; CachePositive iff
/// s >= gamma + g*(1-gamma); otherwise Skip.
CacheKind caching_decision(double s_nl, double gamma, double gap);

inline constexpr double kEmptySlotEntropy = std::numeric_limits<double>::infinity();

enum class InsertOutcome { Filled, Replaced, Rejected };

struct InsertResult {
  InsertOutcome outcome = InsertOutcome::Rejected;
  std::size_t slot = 0;  // valid unless Rejected
};

class TaskAwareMemory {
 public:
  TaskAwareMemory(std::size_t id_count, std::size_t neg_count, std::size_t length, std::size_t dim);

  std::size_t id_count() const { return id_count_; }
  std::size_t neg_count() const { return neg_count_; }
  std::size_t classes() const { return id_count_ + neg_count_; }
  std::size_t length() const { return length_; }
  std::size_t dim() const { return dim_; }

  std::size_t occupancy(std::size_t y) const { return occupancy_[y]; }
  std::size_t total_occupancy() const;
  std::span<const float> slot(std::size_t y, std::size_t l) const {
    return {slots_.data() + (y * length_ + l) * dim_, dim_};
  }
  double entropy(std::size_t y, std::size_t l) const { return entropies_[y * length_ + l]; }

  /// Fills the first empty slot of class y; on a full class replaces the
  /// max-entropy slot only if entropy is strictly lower. Ties keep the
  /// incumbent (and, among equal maxima, the lowest slot is the candidate).
  InsertResult insert(std::size_t y, std::span<const double> v, double entropy);

  /// Bytes held by the slot tensor at float32 precision.
  std::size_t footprint_bytes() const { return footprint_bytes(id_count_, neg_count_, length_, dim_); }
  static std::size_t footprint_bytes(std::size_t id_count, std::size_t neg_count, std::size_t length,
                                     std::size_t dim) {
    return (id_count + neg_count) * length * dim * sizeof(float);
  }

 private:
  friend TaskAwareMemory load_memory_snapshot(const std::filesystem::path& dir);

  std::size_t id_count_;
  std::size_t neg_count_;
  std::size_t length_;
  std::size_t dim_;
  std::vector<float> slots_;
  std::vector<double> entropies_;
  std::vector<std::size_t> occupancy_;
};

/// Row y of the task-adaptive proxies: L2(mean of [M_y ; c_y]) over L+1 rows.
void task_adaptive_row(const TaskAwareMemory& memory, const ProxyMatrix& text, std::size_t y, std::span<double> out);
ProxyMatrix task_adaptive_proxies(const TaskAwareMemory& memory, const ProxyMatrix& text);

/// phi(x) = exp(-beta (1 - x)).
double affinity(double x, double beta);

/// Row y of the sample-adaptive proxies: L2(sum_l phi(v . m_l) m_l) over the
/// extended rows [M_y ; c_y]. Throws DegenerateProxy if the weighted sum has
/// norm <= 1e-12.
void sample_adaptive_row(const TaskAwareMemory& memory, const ProxyMatrix& text, std::span<const double> v,
                         double beta, std::size_t y, std::span<double> out);
ProxyMatrix sample_adaptive_proxies(const TaskAwareMemory& memory, const ProxyMatrix& text, std::span<const double> v,
                                    double beta);

struct ClassOccupancy {
  std::size_t count = 0;
  // Over filled slots; NaN when the class is empty.
  double min_entropy = 0.0;
  double max_entropy = 0.0;
  double mean_entropy = 0.0;
};

struct OccupancyReport {
  std::vector<ClassOccupancy> per_class;
  std::size_t total = 0;
  std::size_t id_total = 0;
  std::size_t neg_total = 0;
  std::size_t classes_touched = 0;
};

OccupancyReport occupancy_report(const TaskAwareMemory& memory);

/// Debug/warm-start snapshot: slots.emb (all (C+M)*L slots, zeros included)
/// and memory.json (shape, occupancy, entropies with null for empty slots).
void save_memory_snapshot(const std::filesystem::path& dir, const TaskAwareMemory& memory);
TaskAwareMemory load_memory_snapshot(const std::filesystem::path& dir);

}  // namespace adaneg
