#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "adaneg/embeddings.hpp"
#include "adaneg/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace adaneg;

namespace {

std::string le32(std::uint32_t v) {
  std::string s;
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  return s;
}

std::string emb_bytes(std::uint32_t count, std::uint32_t dim, std::uint8_t flags, const std::vector<float>& values,
                      std::uint32_t version = 1) {
  std::string s = "EMB1" + le32(version) + le32(count) + le32(dim);
  s.push_back(static_cast<char>(flags));
  for (float f : values) s += le32(std::bit_cast<std::uint32_t>(f));
  return s;
}

EmbeddingFile parse(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_embedding_file(in);
}

}  // namespace

TEST_CASE("EMB1 reads a hand-built file") {
  const auto file = parse(emb_bytes(2, 3, 1, {1.0f, 2.0f, 2.0f, 0.0f, -3.0f, 4.0f}));
  CHECK(file.count == 2);
  CHECK(file.dim == 3);
  CHECK(file.flags == 1);
  CHECK(file.row(1)[1] == -3.0f);

  const auto m = EmbeddingMatrix::from_file(file);
  REQUIRE(m.rows() == 2);
  CHECK(m.row(0)[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(m.row(1)[2] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("EMB1 header layout is exactly 17 bytes, little-endian") {
  EmbeddingFile f;
  f.count = 1;
  f.dim = 2;
  f.flags = 0;
  f.values = {0.5f, -1.0f};
  std::ostringstream out(std::ios::binary);
  write_embedding_file(out, f);
  CHECK(out.str() == emb_bytes(1, 2, 0, {0.5f, -1.0f}));
  CHECK(out.str().size() == 17 + 8);
}

TEST_CASE("EMB1 round trip preserves every bit") {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> g;
  EmbeddingFile f;
  f.count = 13;
  f.dim = 5;
  f.flags = kFlagUnitNorm;
  for (int i = 0; i < 65; ++i) f.values.push_back(g(rng));
  f.values[3] = -0.0f;
  f.values[4] = std::numeric_limits<float>::denorm_min();

  const auto dir = test_util::scratch_dir("emb_roundtrip");
  save_embedding_file(dir / "x.emb", f);
  const auto back = load_embedding_file(dir / "x.emb");
  CHECK(back.count == f.count);
  CHECK(back.dim == f.dim);
  CHECK(back.flags == f.flags);
  REQUIRE(back.values.size() == f.values.size());
  for (std::size_t i = 0; i < f.values.size(); ++i)
    CHECK(std::bit_cast<std::uint32_t>(back.values[i]) == std::bit_cast<std::uint32_t>(f.values[i]));
}

TEST_CASE("EMB1 rejects malformed input with the right error kind") {
  const std::vector<float> six = {1, 0, 0, 0, 1, 0};
  CHECK(test_util::error_kind([&] { parse("EMB2" + emb_bytes(2, 3, 0, six).substr(4)); }) == ErrorKind::BadMagic);
  CHECK(test_util::error_kind([&] { parse("EM"); }) == ErrorKind::BadMagic);
  CHECK(test_util::error_kind([&] { parse(emb_bytes(2, 3, 0, six, 2)); }) == ErrorKind::BadMagic);
  CHECK(test_util::error_kind([&] { parse(emb_bytes(2, 3, 0, six).substr(0, 12)); }) == ErrorKind::TruncatedFile);
  CHECK(test_util::error_kind([&] { parse(emb_bytes(3, 3, 0, six)); }) == ErrorKind::TruncatedFile);
  CHECK(test_util::error_kind([&] { parse(emb_bytes(2, 3, 0, six) + "x"); }) == ErrorKind::DimensionMismatch);
  CHECK(test_util::error_kind([&] { parse(emb_bytes(0, 0, 0, {})); }) == ErrorKind::DimensionMismatch);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  CHECK(test_util::error_kind([&] { parse(emb_bytes(1, 2, 0, {nan, 1})); }) == ErrorKind::NonFiniteValue);
  CHECK(test_util::error_kind([&] { parse(emb_bytes(1, 2, 0, {1, -inf})); }) == ErrorKind::NonFiniteValue);
  CHECK(parse(emb_bytes(0, 4, 0, {})).count == 0);
}

TEST_CASE("normalize") {
  SUBCASE("3-4-5 vector") {
    const std::vector<double> raw = {3.0, 4.0};
    const auto v = normalize(std::span<const double>(raw));
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-15));
  }
  SUBCASE("zero and tiny vectors") {
    const std::vector<double> zero(4, 0.0), tiny = {1e-13, 0.0};
    CHECK(test_util::error_kind([&] { normalize(std::span<const double>(zero)); }) == ErrorKind::ZeroVector);
    CHECK(test_util::error_kind([&] { normalize(std::span<const double>(tiny)); }) == ErrorKind::ZeroVector);
  }
  SUBCASE("non-finite") {
    const std::vector<double> bad = {1.0, std::nan("")};
    CHECK(test_util::error_kind([&] { normalize(std::span<const double>(bad)); }) == ErrorKind::NonFiniteValue);
  }
  SUBCASE("idempotent and scale invariant") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int t = 0; t < 200; ++t) {
      std::vector<double> raw(1 + t % 17);
      for (double& x : raw) x = g(rng);
      const auto a = normalize(std::span<const double>(raw));
      const auto b = normalize(a.values());
      for (double& x : raw) x *= 1e6;
      const auto c = normalize(std::span<const double>(raw));
      CHECK(l2_norm(a.values()) == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t i = 0; i < raw.size(); ++i) {
        CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-12));
        CHECK(c[i] == doctest::Approx(a[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("EmbeddingMatrix enforces one dimension") {
  EmbeddingMatrix m;
  const std::vector<double> a = {1, 2, 3}, b = {1, 2};
  m.push_back(std::span<const double>(a));
  CHECK(m.dim() == 3);
  CHECK(test_util::error_kind([&] { m.push_back(std::span<const double>(b)); }) == ErrorKind::DimensionMismatch);
  CHECK(m.rows() == 1);
}

TEST_CASE("ProxyMatrix validation") {
  std::mt19937_64 rng(11);
  const auto rows = oracle::random_rows(rng, 5, 4);
  const auto p = oracle::to_proxies(rows, 2, 3);
  CHECK(p.size() == 5);
  CHECK(p.row(3)[2] == rows[3][2]);

  std::vector<double> flat(5 * 4, 0.5);
  CHECK_NOTHROW(ProxyMatrix(flat, 2, 3, 4));
  flat[0] = 0.6;
  CHECK(test_util::error_kind([&] { ProxyMatrix(flat, 2, 3, 4); }) == ErrorKind::DimensionMismatch);
  flat[0] = std::nan("");
  CHECK(test_util::error_kind([&] { ProxyMatrix(flat, 2, 3, 4); }) == ErrorKind::NonFiniteValue);
  CHECK(test_util::error_kind([&] { ProxyMatrix(std::vector<double>(8, 0.5), 0, 2, 4); }) == ErrorKind::EmptyInput);
  CHECK(test_util::error_kind([&] { ProxyMatrix(std::vector<double>(8, 0.5), 2, 0, 4); }) == ErrorKind::EmptyInput);
  CHECK(test_util::error_kind([&] { ProxyMatrix(std::vector<double>(7, 0.5), 1, 1, 4); }) ==
        ErrorKind::DimensionMismatch);
}

TEST_CASE("build_proxy_matrix concatenates ID then negatives") {
  EmbeddingMatrix id(2), neg(2), wrong(3);
  const std::vector<double> a = {2, 0}, b = {0, 5}, c = {1, 1}, w = {1, 0, 0};
  id.push_back(std::span<const double>(a));
  neg.push_back(std::span<const double>(b));
  neg.push_back(std::span<const double>(c));
  wrong.push_back(std::span<const double>(w));
  const auto p = build_proxy_matrix(id, neg);
  CHECK(p.id_count() == 1);
  CHECK(p.neg_count() == 2);
  CHECK(p.row(0)[0] == 1.0);
  CHECK(p.row(1)[1] == 1.0);
  CHECK(p.row(2)[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(test_util::error_kind([&] { build_proxy_matrix(id, wrong); }) == ErrorKind::DimensionMismatch);
  CHECK(test_util::error_kind([&] { build_proxy_matrix(EmbeddingMatrix(2), neg); }) == ErrorKind::EmptyInput);
}

TEST_CASE("manifest parsing") {
  const std::string good = R"({
    "id_label_names": ["cat", "dog"],
    "neg_label_names": ["rock"],
    "files": {"id_proxies": "a.emb", "neg_proxies": "b.emb", "test_stream": "c.emb"},
    "ground_truth": [{"kind": "id", "class": 1}, {"kind": "ood"}, {"kind": "ood", "dataset": "sun"}]
  })";
  const auto m = parse_manifest(good, "/data");
  CHECK(m.id_label_names.size() == 2);
  CHECK(m.resolve(kRoleNegProxies) == std::filesystem::path("/data/b.emb"));
  REQUIRE(m.ground_truth);
  CHECK((*m.ground_truth)[0] == GroundTruth::id(1));
  CHECK((*m.ground_truth)[1] == GroundTruth::ood());
  CHECK((*m.ground_truth)[2] == GroundTruth::ood("sun"));

  const auto reparsed = parse_manifest(manifest_to_json(m), "/data");
  CHECK(reparsed.ground_truth == m.ground_truth);
  CHECK(reparsed.files == m.files);

  const auto bad = [](const std::string& text) { return test_util::error_kind([&] { parse_manifest(text); }); };
  CHECK(bad("not json") == ErrorKind::ManifestInvalid);
  CHECK(bad(R"({"id_label_names": ["a"], "neg_label_names": ["a"], "files": {}})") == ErrorKind::ManifestInvalid);
  CHECK(bad(R"({"id_label_names": [], "neg_label_names": ["a"], "files": {}})") == ErrorKind::ManifestInvalid);
  CHECK(bad(R"({"id_label_names": ["a"], "neg_label_names": ["b"], "files": {"extra": "x"}})") ==
        ErrorKind::ManifestInvalid);
  CHECK(bad(R"({"id_label_names": ["a"], "neg_label_names": ["b"], "files": {},
               "ground_truth": [{"kind": "maybe"}]})") == ErrorKind::ManifestInvalid);
  CHECK(bad(R"({"id_label_names": ["a"], "neg_label_names": ["b"], "files": {},
               "ground_truth": [{"kind": "ood", "dataset": "a,b"}]})") == ErrorKind::ManifestInvalid);
  CHECK(test_util::error_kind([] {
          parse_manifest(R"({"id_label_names": ["a"], "neg_label_names": ["b"], "files": {}})").resolve(kRoleTestStream);
        }) == ErrorKind::ManifestInvalid);
}

TEST_CASE("dataset save and load round trip") {
  std::mt19937_64 rng(5);
  Dataset ds;
  ds.id_label_names = {"a", "b"};
  ds.neg_label_names = {"x", "y", "z"};
  ds.proxies = oracle::to_proxies(oracle::random_rows(rng, 5, 6), 2, 3);
  ds.stream = EmbeddingMatrix(6);
  for (const auto& r : oracle::random_rows(rng, 4, 6)) ds.stream.push_back(std::span<const double>(r));
  ds.ground_truth = std::vector<GroundTruth>{GroundTruth::id(0), GroundTruth::ood("o"), GroundTruth::id(1),
                                             GroundTruth::ood()};

  const auto dir = test_util::scratch_dir("dataset_roundtrip");
  save_dataset(dir, ds);
  const auto back = load_dataset(dir / "manifest.json");
  CHECK(back.id_label_names == ds.id_label_names);
  CHECK(back.neg_label_names == ds.neg_label_names);
  CHECK(back.ground_truth == ds.ground_truth);
  REQUIRE(back.stream.rows() == 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t d = 0; d < 6; ++d) CHECK(back.stream.row(i)[d] == doctest::Approx(ds.stream.row(i)[d]).epsilon(1e-6));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t d = 0; d < 6; ++d)
      CHECK(back.proxies.row(i)[d] == doctest::Approx(ds.proxies.row(i)[d]).epsilon(1e-6));
}

TEST_CASE("load_dataset cross-checks the manifest against the files") {
  std::mt19937_64 rng(9);
  Dataset ds;
  ds.id_label_names = {"a"};
  ds.neg_label_names = {"x"};
  ds.proxies = oracle::to_proxies(oracle::random_rows(rng, 2, 3), 1, 1);
  ds.stream = EmbeddingMatrix(3);
  for (const auto& r : oracle::random_rows(rng, 2, 3)) ds.stream.push_back(std::span<const double>(r));
  const auto dir = test_util::scratch_dir("dataset_checks");
  save_dataset(dir, ds);

  auto m = load_manifest(dir / "manifest.json");
  CHECK_NOTHROW(load_dataset(m));

  auto extra_label = m;
  extra_label.id_label_names.push_back("b");
  CHECK(test_util::error_kind([&] { load_dataset(extra_label); }) == ErrorKind::ManifestInvalid);

  auto short_truth = m;
  short_truth.ground_truth = std::vector<GroundTruth>{GroundTruth::ood()};
  CHECK(test_util::error_kind([&] { load_dataset(short_truth); }) == ErrorKind::ManifestInvalid);

  auto bad_class = m;
  bad_class.ground_truth = std::vector<GroundTruth>{GroundTruth::id(0), GroundTruth::id(1)};
  CHECK(test_util::error_kind([&] { load_dataset(bad_class); }) == ErrorKind::ManifestInvalid);

  EmbeddingFile wide;
  wide.count = 2;
  wide.dim = 4;
  wide.values.assign(8, 1.0f);
  save_embedding_file(dir / "wide.emb", wide);
  auto mixed_dim = m;
  mixed_dim.files[kRoleTestStream] = "wide.emb";
  CHECK(test_util::error_kind([&] { load_dataset(mixed_dim); }) == ErrorKind::DimensionMismatch);

  auto missing = m;
  missing.files[kRoleTestStream] = "nope.emb";
  CHECK(test_util::error_kind([&] { load_dataset(missing); }) == ErrorKind::Io);
}
