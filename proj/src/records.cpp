#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "adaneg/error.hpp"
#include "adaneg/pipeline.hpp"

namespace adaneg {

namespace {

constexpr const char* kHeader = "index,truth,s_nl,s_ta,s_sa,s_all,pseudo_label,cached,mr";

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_optional(const std::optional<double>& x) { return x ? format_double(*x) : std::string{}; }

std::string format_truth(const std::optional<GroundTruth>& truth) {
  if (!truth) return {};
  if (truth->is_id()) return "id:" + std::to_string(truth->class_index);
  return truth->dataset.empty() ? "ood" : "ood:" + truth->dataset;
}

[[noreturn]] void bad_row(std::size_t line, const std::string& what) {
  throw Error(ErrorKind::ManifestInvalid, "record line " + std::to_string(line) + ": " + what);
}

std::size_t parse_size(const std::string& field, std::size_t line) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) bad_row(line, "bad integer '" + field + "'");
  return value;
}

double parse_double(const std::string& field, std::size_t line) {
  // std::from_chars for double is unavailable on older libstdc++; strtod
  // round-trips %.17g output exactly.
  char* end = nullptr;
  const double value = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size()) bad_row(line, "bad number '" + field + "'");
  return value;
}

std::optional<double> parse_optional(const std::string& field, std::size_t line) {
  if (field.empty()) return std::nullopt;
  return parse_double(field, line);
}

std::optional<GroundTruth> parse_truth(const std::string& field, std::size_t line) {
  if (field.empty()) return std::nullopt;
  if (field.rfind("id:", 0) == 0) return GroundTruth::id(parse_size(field.substr(3), line));
  if (field == "ood") return GroundTruth::ood();
  if (field.rfind("ood:", 0) == 0) return GroundTruth::ood(field.substr(4));
  bad_row(line, "bad truth '" + field + "'");
}

}  // namespace

void write_records_csv(std::ostream& out, std::span<const SampleRecord> records) {
  out << kHeader << '\n';
  for (const auto& r : records) {
    out << r.index << ',' << format_truth(r.truth) << ',' << format_double(r.s_nl) << ',' << format_optional(r.s_ta)
        << ',' << format_optional(r.s_sa) << ',' << format_double(r.s_all) << ',' << r.pseudo_label << ','
        << to_string(r.cache.kind) << ',' << format_optional(r.mix_ratio) << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing records");
}

std::vector<SampleRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw Error(ErrorKind::ManifestInvalid, std::string("record file must start with header '") + kHeader + "'");
  std::vector<SampleRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 9) bad_row(line_no, "expected 9 fields, got " + std::to_string(fields.size()));

    SampleRecord r;
    r.index = parse_size(fields[0], line_no);
    r.truth = parse_truth(fields[1], line_no);
    r.s_nl = parse_double(fields[2], line_no);
    r.s_ta = parse_optional(fields[3], line_no);
    r.s_sa = parse_optional(fields[4], line_no);
    r.s_all = parse_double(fields[5], line_no);
    r.pseudo_label = parse_size(fields[6], line_no);
    if (fields[7] == "negative") r.cache.kind = CacheKind::CacheNegative;
    else if (fields[7] == "positive") r.cache.kind = CacheKind::CachePositive;
    else if (fields[7] == "skip") r.cache.kind = CacheKind::Skip;
    else bad_row(line_no, "bad cached value '" + fields[7] + "'");
    if (r.cache.kind != CacheKind::Skip) r.cache.target_class = r.pseudo_label;
    r.mix_ratio = parse_optional(fields[8], line_no);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace adaneg
