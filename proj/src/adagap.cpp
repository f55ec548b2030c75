#include "adaneg/adagap.hpp"

#include <algorithm>

#include "adaneg/error.hpp"

namespace adaneg {

MixRatioEstimator::MixRatioEstimator(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorKind::ConfigInvalid, "mix-ratio queue length must be >= 1");
}

void MixRatioEstimator::record(bool is_id_estimate) {
  window_.push_back(is_id_estimate);
  id_count_ += is_id_estimate ? 1 : 0;
  if (window_.size() > capacity_) {
    id_count_ -= window_.front() ? 1 : 0;
    window_.pop_front();
  }
}

double MixRatioEstimator::mix_ratio() const {
  if (window_.empty()) return 0.5;
  return static_cast<double>(id_count_) / static_cast<double>(window_.size());
}

CacheKind adaptive_decision(double s_nl, double gamma, double gap, double mix_ratio) {
  if (s_nl < gamma - std::max(gap, mix_ratio) * gamma) return CacheKind::CacheNegative;
  if (s_nl >= gamma + std::max(gap, 1.0 - mix_ratio) * (1.0 - gamma)) return CacheKind::CachePositive;
  return CacheKind::Skip;
}

}  // namespace adaneg
