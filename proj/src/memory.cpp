#include "adaneg/memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "adaneg/error.hpp"
#include "json.hpp"

namespace adaneg {

const char* to_string(CacheKind kind) {
  switch (kind) {
    case CacheKind::CacheNegative: return "negative";
    case CacheKind::CachePositive: return "positive";
    case CacheKind::Skip: return "skip";
  }
  return "skip";
}

CacheKind caching_decision(double s_nl, double gamma, double gap) {
  if (s_nl < gamma - gap * gamma) return CacheKind::CacheNegative;
  if (s_nl >= gamma + gap * (1.0 - gamma)) return CacheKind::CachePositive;
  return CacheKind::Skip;
}

TaskAwareMemory::TaskAwareMemory(std::size_t id_count, std::size_t neg_count, std::size_t length, std::size_t dim)
    : id_count_(id_count), neg_count_(neg_count), length_(length), dim_(dim) {
  if (id_count == 0 || neg_count == 0 || length == 0 || dim == 0)
    throw Error(ErrorKind::ConfigInvalid, "memory dimensions must all be >= 1");
  slots_.assign(classes() * length_ * dim_, 0.0f);
  entropies_.assign(classes() * length_, kEmptySlotEntropy);
  occupancy_.assign(classes(), 0);
}

std::size_t TaskAwareMemory::total_occupancy() const {
  std::size_t total = 0;
  for (std::size_t n : occupancy_) total += n;
  return total;
}

InsertResult TaskAwareMemory::insert(std::size_t y, std::span<const double> v, double entropy) {
  if (y >= classes()) throw Error(ErrorKind::DimensionMismatch, "class index out of range");
  if (v.size() != dim_) throw Error(ErrorKind::DimensionMismatch, "feature dim does not match memory");

  std::size_t slot_index;
  InsertOutcome outcome;
  if (occupancy_[y] < length_) {
    slot_index = occupancy_[y]++;
    outcome = InsertOutcome::Filled;
  } else {
    const auto first = entropies_.begin() + static_cast<std::ptrdiff_t>(y * length_);
    const auto worst = std::max_element(first, first + static_cast<std::ptrdiff_t>(length_));
    if (!(entropy < *worst)) return {};
    slot_index = static_cast<std::size_t>(worst - first);
    outcome = InsertOutcome::Replaced;
  }
  float* dst = slots_.data() + (y * length_ + slot_index) * dim_;
  std::transform(v.begin(), v.end(), dst, [](double x) { return static_cast<float>(x); });
  entropies_[y * length_ + slot_index] = entropy;
  return {outcome, slot_index};
}

namespace {

void check_text(const TaskAwareMemory& memory, const ProxyMatrix& text) {
  if (text.id_count() != memory.id_count() || text.neg_count() != memory.neg_count() || text.dim() != memory.dim())
    throw Error(ErrorKind::DimensionMismatch, "text proxies do not match memory shape");
}

void normalize_into(std::span<double> row, std::size_t y) {
  const double norm = l2_norm(row);
  if (!(norm > kZeroNormEps))
    throw Error(ErrorKind::DegenerateProxy, "adaptive proxy for class " + std::to_string(y) + " has norm <= 1e-12");
  for (double& x : row) x /= norm;
}

double dot_mixed(std::span<const double> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * static_cast<double>(b[i]);
  return s;
}

}  // namespace

void task_adaptive_row(const TaskAwareMemory& memory, const ProxyMatrix& text, std::size_t y, std::span<double> out) {
  // Empty slots are zero vectors: they add nothing to the sum, and the 1/(L+1)
  // factor is a pure rescale, so iterating the filled prefix is exact.
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t l = 0; l < memory.occupancy(y); ++l) {
    const auto m = memory.slot(y, l);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += static_cast<double>(m[d]);
  }
  const auto c = text.row(y);
  const double scale = 1.0 / static_cast<double>(memory.length() + 1);
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = (out[d] + c[d]) * scale;
  normalize_into(out, y);
}

ProxyMatrix task_adaptive_proxies(const TaskAwareMemory& memory, const ProxyMatrix& text) {
  check_text(memory, text);
  const std::size_t dim = memory.dim();
  std::vector<double> rows(memory.classes() * dim);
  for (std::size_t y = 0; y < memory.classes(); ++y)
    task_adaptive_row(memory, text, y, std::span<double>(rows).subspan(y * dim, dim));
  return ProxyMatrix(std::move(rows), memory.id_count(), memory.neg_count(), dim);
}

double affinity(double x, double beta) { return std::exp(-beta * (1.0 - x)); }

void sample_adaptive_row(const TaskAwareMemory& memory, const ProxyMatrix& text, std::span<const double> v,
                         double beta, std::size_t y, std::span<double> out) {
  // Weights are taken relative to the most similar row. The direction of the
  // sum is unchanged and far-away rows cannot underflow it to zero.
  const std::size_t n = memory.occupancy(y);
  const auto c = text.row(y);
  std::vector<double> cos(n + 1);
  for (std::size_t l = 0; l < n; ++l) cos[l] = dot_mixed(v, memory.slot(y, l));
  cos[n] = dot(v, c);
  const double top = *std::max_element(cos.begin(), cos.end());
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    const auto m = memory.slot(y, l);
    const double w = std::exp(beta * (cos[l] - top));
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += w * static_cast<double>(m[d]);
  }
  const double w = std::exp(beta * (cos[n] - top));
  for (std::size_t d = 0; d < out.size(); ++d) out[d] += w * c[d];
  normalize_into(out, y);
}

ProxyMatrix sample_adaptive_proxies(const TaskAwareMemory& memory, const ProxyMatrix& text, std::span<const double> v,
                                    double beta) {
  check_text(memory, text);
  if (v.size() != memory.dim()) throw Error(ErrorKind::DimensionMismatch, "feature dim does not match memory");
  if (!(beta > 0.0)) throw Error(ErrorKind::ConfigInvalid, "beta must be > 0");
  const std::size_t dim = memory.dim();
  std::vector<double> rows(memory.classes() * dim);
  for (std::size_t y = 0; y < memory.classes(); ++y)
    sample_adaptive_row(memory, text, v, beta, y, std::span<double>(rows).subspan(y * dim, dim));
  return ProxyMatrix(std::move(rows), memory.id_count(), memory.neg_count(), dim);
}

OccupancyReport occupancy_report(const TaskAwareMemory& memory) {
  OccupancyReport report;
  report.per_class.resize(memory.classes());
  for (std::size_t y = 0; y < memory.classes(); ++y) {
    ClassOccupancy& c = report.per_class[y];
    c.count = memory.occupancy(y);
    if (c.count == 0) {
      c.min_entropy = c.max_entropy = c.mean_entropy = std::nan("");
      continue;
    }
    c.min_entropy = kEmptySlotEntropy;
    c.max_entropy = 0.0;
    double sum = 0.0;
    for (std::size_t l = 0; l < c.count; ++l) {
      const double e = memory.entropy(y, l);
      c.min_entropy = std::min(c.min_entropy, e);
      c.max_entropy = std::max(c.max_entropy, e);
      sum += e;
    }
    c.mean_entropy = sum / static_cast<double>(c.count);
    report.total += c.count;
    (y < memory.id_count() ? report.id_total : report.neg_total) += c.count;
    ++report.classes_touched;
  }
  return report;
}

void save_memory_snapshot(const std::filesystem::path& dir, const TaskAwareMemory& memory) {
  std::filesystem::create_directories(dir);
  EmbeddingFile slots;
  slots.count = static_cast<std::uint32_t>(memory.classes() * memory.length());
  slots.dim = static_cast<std::uint32_t>(memory.dim());
  slots.flags = 0;  // empty slots are zero rows, so the file is not unit-norm
  slots.values.reserve(static_cast<std::size_t>(slots.count) * slots.dim);
  for (std::size_t y = 0; y < memory.classes(); ++y)
    for (std::size_t l = 0; l < memory.length(); ++l) {
      const auto s = memory.slot(y, l);
      slots.values.insert(slots.values.end(), s.begin(), s.end());
    }
  save_embedding_file(dir / "slots.emb", slots);

  nlohmann::ordered_json doc;
  doc["id_count"] = memory.id_count();
  doc["neg_count"] = memory.neg_count();
  doc["length"] = memory.length();
  doc["dim"] = memory.dim();
  auto occupancy = nlohmann::ordered_json::array();
  auto entropies = nlohmann::ordered_json::array();
  for (std::size_t y = 0; y < memory.classes(); ++y) {
    occupancy.push_back(memory.occupancy(y));
    auto row = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < memory.length(); ++l) {
      if (l < memory.occupancy(y))
        row.push_back(memory.entropy(y, l));
      else
        row.push_back(nullptr);
    }
    entropies.push_back(std::move(row));
  }
  doc["occupancy"] = std::move(occupancy);
  doc["entropies"] = std::move(entropies);
  std::ofstream out(dir / "memory.json", std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write memory.json");
  out << doc.dump(2) << '\n';
}

TaskAwareMemory load_memory_snapshot(const std::filesystem::path& dir) {
  std::ifstream in(dir / "memory.json");
  if (!in) throw Error(ErrorKind::Io, "cannot open " + (dir / "memory.json").string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ManifestInvalid, e.what());
  }
  try {
    TaskAwareMemory memory(doc.at("id_count").get<std::size_t>(), doc.at("neg_count").get<std::size_t>(),
                           doc.at("length").get<std::size_t>(), doc.at("dim").get<std::size_t>());
    const EmbeddingFile slots = load_embedding_file(dir / "slots.emb");
    if (slots.dim != memory.dim() || slots.count != memory.classes() * memory.length())
      throw Error(ErrorKind::DimensionMismatch, "slots.emb does not match memory.json shape");
    const auto& occupancy = doc.at("occupancy");
    const auto& entropies = doc.at("entropies");
    if (occupancy.size() != memory.classes() || entropies.size() != memory.classes())
      throw Error(ErrorKind::ManifestInvalid, "occupancy/entropies length mismatch");
    memory.slots_ = slots.values;
    for (std::size_t y = 0; y < memory.classes(); ++y) {
      const auto n = occupancy[y].get<std::size_t>();
      if (n > memory.length()) throw Error(ErrorKind::ManifestInvalid, "occupancy exceeds memory length");
      memory.occupancy_[y] = n;
      for (std::size_t l = 0; l < n; ++l) memory.entropies_[y * memory.length() + l] = entropies[y].at(l).get<double>();
    }
    return memory;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ManifestInvalid, e.what());
  }
}

}  // namespace adaneg
