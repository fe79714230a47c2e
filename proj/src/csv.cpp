#include "pedflow/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pedflow/error.hpp"

namespace pedflow::csv {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t row) {
  return path.string() + " row " + std::to_string(row + 1);
}

}  // namespace

Table read(const std::filesystem::path& path, const std::vector<std::string>& required,
           const std::vector<std::string>& optional) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  Table t;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": missing header");
  // Tolerate a UTF-8 byte order mark.
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  t.header = split(line);
  if (t.header.size() < required.size() || t.header.size() > required.size() + optional.size())
    throw Error(ErrorCode::ParseError, path.string() + ": unexpected header '" + line + "'");
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const std::string& want = i < required.size() ? required[i] : optional[i - required.size()];
    if (t.header[i] != want)
      throw Error(ErrorCode::ParseError, path.string() + ": header column " + std::to_string(i + 1) +
                                             " is '" + t.header[i] + "', expected '" + want + "'");
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (fields.size() < required.size() || fields.size() > t.header.size())
      throw Error(ErrorCode::ParseError, where(path, t.rows.size()) + ": wrong field count");
    fields.resize(t.header.size());
    t.rows.push_back(std::move(fields));
  }
  return t;
}

double to_double(std::string_view field, const std::filesystem::path& path, std::size_t row) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, where(path, row) + ": bad number '" + std::string(field) + "'");
  return v;
}

long to_long(std::string_view field, const std::filesystem::path& path, std::size_t row) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw Error(ErrorCode::ParseError, where(path, row) + ": bad integer '" + std::string(field) + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  if (v == 0.0) v = 0.0;  // no "-0.000"
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  std::string s(buf, ptr);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace pedflow::csv
