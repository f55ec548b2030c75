#include "adaneg/embeddings.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "adaneg/error.hpp"
#include "json.hpp"

namespace adaneg {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 1;

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xffu));
}

}  // namespace

EmbeddingFile read_embedding_file(std::istream& in) {
  std::array<unsigned char, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() < 4 || std::memcmp(header.data(), kMagic.data(), 4) != 0)
    throw Error(ErrorKind::BadMagic, "missing EMB1 magic");
  if (static_cast<std::size_t>(in.gcount()) != header.size())
    throw Error(ErrorKind::TruncatedFile, "header shorter than 17 bytes");
  const std::uint32_t version = get_u32(header.data() + 4);
  if (version != kEmbFormatVersion)
    throw Error(ErrorKind::BadMagic, "unsupported EMB1 version " + std::to_string(version));

  EmbeddingFile file;
  file.count = get_u32(header.data() + 8);
  file.dim = get_u32(header.data() + 12);
  file.flags = header[16];
  if (file.dim == 0) throw Error(ErrorKind::DimensionMismatch, "dimension 0 in header");

  const std::size_t n_values = static_cast<std::size_t>(file.count) * file.dim;
  std::vector<unsigned char> payload(n_values * 4);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size())
    throw Error(ErrorKind::TruncatedFile, "expected " + std::to_string(file.count) + " rows of dim " +
                                              std::to_string(file.dim) + ", payload is short");
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::DimensionMismatch, "trailing bytes after count*dim payload");

  file.values.resize(n_values);
  for (std::size_t i = 0; i < n_values; ++i) {
    const float v = std::bit_cast<float>(get_u32(payload.data() + 4 * i));
    if (!std::isfinite(v))
      throw Error(ErrorKind::NonFiniteValue, "row " + std::to_string(i / file.dim) + " holds NaN/Inf");
    file.values[i] = v;
  }
  return file;
}

EmbeddingFile load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_embedding_file(in);
}

void write_embedding_file(std::ostream& out, const EmbeddingFile& file) {
  if (file.values.size() != static_cast<std::size_t>(file.count) * file.dim)
    throw Error(ErrorKind::DimensionMismatch, "values size != count*dim");
  std::string buf(kMagic.begin(), kMagic.end());
  buf.reserve(kHeaderBytes + file.values.size() * 4);
  put_u32(buf, kEmbFormatVersion);
  put_u32(buf, file.count);
  put_u32(buf, file.dim);
  buf.push_back(static_cast<char>(file.flags));
  for (float v : file.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed");
}

void save_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  write_embedding_file(out, file);
}

EmbeddingVector normalize(std::span<const double> raw) {
  double sq = 0.0;
  for (double x : raw) {
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFiniteValue, "non-finite component");
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > kZeroNormEps)) throw Error(ErrorKind::ZeroVector, "vector norm <= 1e-12");
  std::vector<double> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [norm](double x) { return x / norm; });
  return EmbeddingVector(std::move(out));
}

EmbeddingVector normalize(std::span<const float> raw) {
  const std::vector<double> widened(raw.begin(), raw.end());
  return normalize(std::span<const double>(widened));
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void EmbeddingMatrix::push_back(std::span<const double> raw) {
  if (dim_ == 0) dim_ = raw.size();
  if (raw.size() != dim_)
    throw Error(ErrorKind::DimensionMismatch,
                "row of dim " + std::to_string(raw.size()) + " into matrix of dim " + std::to_string(dim_));
  const EmbeddingVector v = normalize(raw);
  data_.insert(data_.end(), v.values().begin(), v.values().end());
}

void EmbeddingMatrix::push_back(std::span<const float> raw) {
  if (dim_ == 0) dim_ = raw.size();
  if (raw.size() != dim_)
    throw Error(ErrorKind::DimensionMismatch,
                "row of dim " + std::to_string(raw.size()) + " into matrix of dim " + std::to_string(dim_));
  const EmbeddingVector v = normalize(raw);
  data_.insert(data_.end(), v.values().begin(), v.values().end());
}

EmbeddingMatrix EmbeddingMatrix::from_file(const EmbeddingFile& file) {
  EmbeddingMatrix m(file.dim);
  for (std::size_t i = 0; i < file.count; ++i) {
    try {
      m.push_back(file.row(i));
    } catch (const Error& e) {
      throw Error(e.kind(), "row " + std::to_string(i) + ": " + e.what());
    }
  }
  return m;
}

ProxyMatrix::ProxyMatrix(std::vector<double> rows, std::size_t id_count, std::size_t neg_count, std::size_t dim)
    : id_count_(id_count), neg_count_(neg_count), dim_(dim), rows_(std::move(rows)) {
  if (id_count_ == 0 || neg_count_ == 0) throw Error(ErrorKind::EmptyInput, "need C >= 1 and M >= 1");
  if (dim_ == 0 || rows_.size() != (id_count_ + neg_count_) * dim_)
    throw Error(ErrorKind::DimensionMismatch, "proxy storage does not match (C+M) x D");
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = row(i);
    if (!std::all_of(r.begin(), r.end(), [](double x) { return std::isfinite(x); }))
      throw Error(ErrorKind::NonFiniteValue, "proxy row " + std::to_string(i));
    if (!(std::abs(l2_norm(r) - 1.0) <= kUnitNormTol))
      throw Error(ErrorKind::DimensionMismatch, "proxy row " + std::to_string(i) + " is not unit norm");
  }
}

void ProxyMatrix::replace_row(std::size_t i, std::span<const double> row) {
  if (i >= size() || row.size() != dim_) throw Error(ErrorKind::DimensionMismatch, "replacement row does not fit");
  if (!(std::abs(l2_norm(row) - 1.0) <= kUnitNormTol))
    throw Error(ErrorKind::DimensionMismatch, "replacement row " + std::to_string(i) + " is not unit norm");
  std::copy(row.begin(), row.end(), rows_.begin() + static_cast<std::ptrdiff_t>(i * dim_));
}

ProxyMatrix build_proxy_matrix(const EmbeddingMatrix& id_rows, const EmbeddingMatrix& neg_rows) {
  if (id_rows.empty() || neg_rows.empty()) throw Error(ErrorKind::EmptyInput, "ID and negative rows must be nonempty");
  if (id_rows.dim() != neg_rows.dim())
    throw Error(ErrorKind::DimensionMismatch, "ID dim " + std::to_string(id_rows.dim()) + " vs negative dim " +
                                                  std::to_string(neg_rows.dim()));
  std::vector<double> rows;
  rows.reserve((id_rows.rows() + neg_rows.rows()) * id_rows.dim());
  for (const EmbeddingMatrix* m : {&id_rows, &neg_rows}) {
    for (std::size_t i = 0; i < m->rows(); ++i) {
      const EmbeddingVector v = normalize(m->row(i));
      rows.insert(rows.end(), v.values().begin(), v.values().end());
    }
  }
  return ProxyMatrix(std::move(rows), id_rows.rows(), neg_rows.rows(), id_rows.dim());
}

ProxyMatrix build_proxy_matrix(const EmbeddingFile& id_rows, const EmbeddingFile& neg_rows) {
  if (id_rows.count == 0 || neg_rows.count == 0)
    throw Error(ErrorKind::EmptyInput, "ID and negative rows must be nonempty");
  if (id_rows.dim != neg_rows.dim)
    throw Error(ErrorKind::DimensionMismatch, "ID dim " + std::to_string(id_rows.dim) + " vs negative dim " +
                                                  std::to_string(neg_rows.dim));
  return build_proxy_matrix(EmbeddingMatrix::from_file(id_rows), EmbeddingMatrix::from_file(neg_rows));
}

// ---- manifest ----

std::filesystem::path DatasetManifest::resolve(const std::string& role) const {
  const auto it = files.find(role);
  if (it == files.end()) throw Error(ErrorKind::ManifestInvalid, "no file for role '" + role + "'");
  return it->second.is_absolute() ? it->second : base_dir / it->second;
}

DatasetManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestInvalid, e.what());
  }

  DatasetManifest m;
  m.base_dir = base_dir;
  try {
    m.id_label_names = doc.at("id_label_names").get<std::vector<std::string>>();
    m.neg_label_names = doc.at("neg_label_names").get<std::vector<std::string>>();
    for (const auto& [role, path] : doc.at("files").items()) {
      if (role != kRoleIdProxies && role != kRoleNegProxies && role != kRoleTestStream)
        throw Error(ErrorKind::ManifestInvalid, "unknown file role '" + role + "'");
      m.files[role] = path.get<std::string>();
    }
    if (doc.contains("ground_truth") && !doc["ground_truth"].is_null()) {
      std::vector<GroundTruth> truth;
      for (const auto& entry : doc["ground_truth"]) {
        const auto kind = entry.at("kind").get<std::string>();
        if (kind == "id") {
          const auto k = entry.at("class").get<long long>();
          if (k < 0) throw Error(ErrorKind::ManifestInvalid, "negative class index");
          truth.push_back(GroundTruth::id(static_cast<std::size_t>(k)));
        } else if (kind == "ood") {
          auto name = entry.value("dataset", std::string{});
          if (name.find_first_of(",\n\r\"") != std::string::npos)
            throw Error(ErrorKind::ManifestInvalid, "OOD dataset name may not contain ',', '\"' or newlines");
          truth.push_back(GroundTruth::ood(std::move(name)));
        } else {
          throw Error(ErrorKind::ManifestInvalid, "ground_truth kind must be 'id' or 'ood', got '" + kind + "'");
        }
      }
      m.ground_truth = std::move(truth);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestInvalid, e.what());
  }

  if (m.id_label_names.empty() || m.neg_label_names.empty())
    throw Error(ErrorKind::ManifestInvalid, "label lists must be nonempty");
  const std::set<std::string> id_names(m.id_label_names.begin(), m.id_label_names.end());
  for (const auto& name : m.neg_label_names) {
    if (id_names.count(name)) throw Error(ErrorKind::ManifestInvalid, "label '" + name + "' is both ID and negative");
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["id_label_names"] = manifest.id_label_names;
  doc["neg_label_names"] = manifest.neg_label_names;
  doc["files"] = nlohmann::ordered_json::object();
  for (const auto& [role, path] : manifest.files) doc["files"][role] = path.generic_string();
  if (manifest.ground_truth) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& t : *manifest.ground_truth) {
      nlohmann::ordered_json e;
      if (t.is_id()) {
        e["kind"] = "id";
        e["class"] = t.class_index;
      } else {
        e["kind"] = "ood";
        if (!t.dataset.empty()) e["dataset"] = t.dataset;
      }
      arr.push_back(std::move(e));
    }
    doc["ground_truth"] = std::move(arr);
  }
  return doc.dump(2);
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << manifest_to_json(manifest) << '\n';
}

Dataset load_dataset(const DatasetManifest& manifest) {
  const EmbeddingFile id_file = load_embedding_file(manifest.resolve(kRoleIdProxies));
  const EmbeddingFile neg_file = load_embedding_file(manifest.resolve(kRoleNegProxies));
  const EmbeddingFile stream_file = load_embedding_file(manifest.resolve(kRoleTestStream));

  if (id_file.count != manifest.id_label_names.size())
    throw Error(ErrorKind::ManifestInvalid, "id_proxies holds " + std::to_string(id_file.count) + " rows for " +
                                                std::to_string(manifest.id_label_names.size()) + " ID labels");
  if (neg_file.count != manifest.neg_label_names.size())
    throw Error(ErrorKind::ManifestInvalid, "neg_proxies holds " + std::to_string(neg_file.count) + " rows for " +
                                                std::to_string(manifest.neg_label_names.size()) + " negative labels");
  if (id_file.dim != neg_file.dim || id_file.dim != stream_file.dim)
    throw Error(ErrorKind::DimensionMismatch, "files in one manifest must share D");

  Dataset ds;
  ds.id_label_names = manifest.id_label_names;
  ds.neg_label_names = manifest.neg_label_names;
  ds.proxies = build_proxy_matrix(id_file, neg_file);
  ds.stream = EmbeddingMatrix::from_file(stream_file);
  if (manifest.ground_truth) {
    if (manifest.ground_truth->size() != stream_file.count)
      throw Error(ErrorKind::ManifestInvalid, "ground_truth has " + std::to_string(manifest.ground_truth->size()) +
                                                  " entries for " + std::to_string(stream_file.count) + " samples");
    for (const auto& t : *manifest.ground_truth) {
      if (t.is_id() && t.class_index >= manifest.id_label_names.size())
        throw Error(ErrorKind::ManifestInvalid, "ground-truth class " + std::to_string(t.class_index) + " out of range");
    }
    ds.ground_truth = manifest.ground_truth;
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) { return load_dataset(load_manifest(manifest_path)); }

namespace {

EmbeddingFile to_file(std::span<const double> rows, std::size_t count, std::size_t dim) {
  EmbeddingFile f;
  f.count = static_cast<std::uint32_t>(count);
  f.dim = static_cast<std::uint32_t>(dim);
  f.flags = kFlagUnitNorm;
  f.values.assign(rows.begin(), rows.end());
  return f;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  const auto& p = dataset.proxies;
  save_embedding_file(dir / "id_proxies.emb", to_file(p.data().subspan(0, p.id_count() * p.dim()), p.id_count(), p.dim()));
  save_embedding_file(dir / "neg_proxies.emb",
                      to_file(p.data().subspan(p.id_count() * p.dim()), p.neg_count(), p.dim()));
  save_embedding_file(dir / "test_stream.emb", to_file(dataset.stream.data(), dataset.stream.rows(), dataset.stream.dim()));

  DatasetManifest m;
  m.id_label_names = dataset.id_label_names;
  m.neg_label_names = dataset.neg_label_names;
  m.files = {{kRoleIdProxies, "id_proxies.emb"}, {kRoleNegProxies, "neg_proxies.emb"}, {kRoleTestStream, "test_stream.emb"}};
  m.ground_truth = dataset.ground_truth;
  save_manifest(dir / "manifest.json", m);
}

}  // namespace adaneg
