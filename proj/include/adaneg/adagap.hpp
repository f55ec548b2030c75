#pragma once

// Online ID:OOD mix-ratio estimation and the adaptive caching gap used on
// imbalanced test streams.

#include <cstddef>
#include <deque>

#include "adaneg/memory.hpp"

namespace adaneg {

inline constexpr std::size_t kDefaultQueueLength = 10000;

/// Bounded FIFO of the most recent ID/OOD estimates.
class MixRatioEstimator {
 public:
  explicit MixRatioEstimator(std::size_t capacity = kDefaultQueueLength);

  void record(bool is_id_estimate);

  /// Stored ID count / stored total; 0.5 while nothing has been recorded.
  double mix_ratio() const;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return window_.size(); }
  std::size_t id_count() const { return id_count_; }
  const std::deque<bool>& window() const { return window_; }

 private:
  std::size_t capacity_;
  std::size_t id_count_ = 0;
  std::deque<bool> window_;
};

/// CacheNegative iff s < gamma - max(g, MR)*gamma;
/// CachePositive iff s >= gamma + max(g, 1-MR)*(1-gamma).
CacheKind adaptive_decision(double s_nl, double gamma, double gap, double mix_ratio);

}  // namespace adaneg
