#pragma once

// Embedding ingestion: the EMB1 binary format, L2 normalization, proxy
// matrices and dataset manifests.
//
// EMB1 layout (little-endian):
//   "EMB1" | version u32 (=1) | count u32 | dim u32 | flags u8 | count*dim f32
// Rows are stored raw; normalization happens once, at ingestion.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adaneg {

inline constexpr std::uint32_t kEmbFormatVersion = 1;
inline constexpr std::uint8_t kFlagUnitNorm = 0x01;
inline constexpr double kZeroNormEps = 1e-12;
inline constexpr double kUnitNormTol = 1e-5;

// Raw rows exactly as stored on disk.
struct EmbeddingFile {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::uint8_t flags = 0;
  std::vector<float> values;  // count * dim, row-major

  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
};

EmbeddingFile read_embedding_file(std::istream& in);
EmbeddingFile load_embedding_file(const std::filesystem::path& path);
void write_embedding_file(std::ostream& out, const EmbeddingFile& file);
void save_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file);

/// A unit-norm feature vector. Only obtainable through normalize().
class EmbeddingVector {
 public:
  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {}
  std::vector<double> values_;

  friend EmbeddingVector normalize(std::span<const double> raw);
};

/// v / ||v||. Throws ZeroVector when ||v|| <= 1e-12 and NonFiniteValue on NaN/Inf.
EmbeddingVector normalize(std::span<const double> raw);
EmbeddingVector normalize(std::span<const float> raw);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Dense row-major set of unit-norm rows sharing one dimension.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::size_t dim) : dim_(dim) {}

  // Appends normalize(raw). Throws DimensionMismatch on a dim change.
  void push_back(std::span<const double> raw);
  void push_back(std::span<const float> raw);
  void push_back(const EmbeddingVector& v) { push_back(v.values()); }

  std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return data_.empty(); }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<const double> data() const { return data_; }

  static EmbeddingMatrix from_file(const EmbeddingFile& file);

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// (C+M) x D proxies: rows [0, C) are ID classes, rows [C, C+M) negatives.
class ProxyMatrix {
 public:
  ProxyMatrix() = default;
  // Validates shape, finiteness and unit norm (within 1e-5) of every row.
  ProxyMatrix(std::vector<double> rows, std::size_t id_count, std::size_t neg_count, std::size_t dim);

  std::size_t id_count() const { return id_count_; }
  std::size_t neg_count() const { return neg_count_; }
  std::size_t size() const { return id_count_ + neg_count_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }
  std::span<const double> data() const { return rows_; }

  /// Overwrites row i; the replacement must be unit norm within 1e-5.
  void replace_row(std::size_t i, std::span<const double> row);

 private:
  std::size_t id_count_ = 0;
  std::size_t neg_count_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> rows_;
};

/// Concatenates ID rows then negative rows, normalizing each one.
ProxyMatrix build_proxy_matrix(const EmbeddingMatrix& id_rows, const EmbeddingMatrix& neg_rows);
ProxyMatrix build_proxy_matrix(const EmbeddingFile& id_rows, const EmbeddingFile& neg_rows);

struct GroundTruth {
  enum class Kind { Id, Ood };
  Kind kind = Kind::Ood;
  std::size_t class_index = 0;  // meaningful for Kind::Id only
  std::string dataset;          // optional OOD subset name, "" if unset

  static GroundTruth id(std::size_t k) { return {Kind::Id, k, {}}; }
  static GroundTruth ood(std::string dataset = {}) { return {Kind::Ood, 0, std::move(dataset)}; }
  bool is_id() const { return kind == Kind::Id; }
  bool operator==(const GroundTruth&) const = default;
};

inline constexpr const char* kRoleIdProxies = "id_proxies";
inline constexpr const char* kRoleNegProxies = "neg_proxies";
inline constexpr const char* kRoleTestStream = "test_stream";

struct DatasetManifest {
  std::vector<std::string> id_label_names;
  std::vector<std::string> neg_label_names;
  std::map<std::string, std::filesystem::path> files;  // role -> path, relative to base_dir
  std::optional<std::vector<GroundTruth>> ground_truth;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& role) const;
};

DatasetManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir = {});
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Everything the engine needs for one stream, normalized and cross-checked.
struct Dataset {
  std::vector<std::string> id_label_names;
  std::vector<std::string> neg_label_names;
  ProxyMatrix proxies;
  EmbeddingMatrix stream;
  std::optional<std::vector<GroundTruth>> ground_truth;
};

/// Loads every file named by the manifest and validates counts, label
/// disjointness, a single shared D, and ground-truth class ranges.
Dataset load_dataset(const DatasetManifest& manifest);
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes EMB1 files plus manifest.json into dir. Stream and proxies are
/// written as-is (already unit norm, flag bit set).
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace adaneg
