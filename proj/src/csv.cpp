#include "mfa/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <stdexcept>

namespace mfa {

std::string format_double(double x) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw std::runtime_error("failed to format double");
  return std::string(buf.data(), end);
}

void write_two_column_csv(const std::filesystem::path& path, std::string_view x_name,
                          std::string_view y_name, std::span<const double> x,
                          std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("csv columns differ in length");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << x_name << ',' << y_name << '\n';
  for (std::size_t i = 0; i < x.size(); ++i) {
    out << format_double(x[i]) << ',' << format_double(y[i]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_columns_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                       const std::vector<std::span<const double>>& columns) {
  if (names.size() != columns.size() || columns.empty()) {
    throw std::invalid_argument("csv header does not match the columns");
  }
  for (const auto& c : columns) {
    if (c.size() != columns[0].size()) throw std::invalid_argument("csv columns differ in length");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (std::size_t i = 0; i < columns[0].size(); ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << format_double(columns[j][i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

double parse_double(std::string_view s, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": bad number '" +
                             std::string(s) + "'");
  }
  return v;
}

}  // namespace

TwoColumn read_two_column_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  TwoColumn out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 2 columns");
    }
    const std::string_view sv(line);
    out.x.push_back(parse_double(sv.substr(0, comma), path, lineno));
    out.y.push_back(parse_double(sv.substr(comma + 1), path, lineno));
  }
  return out;
}

}  // namespace mfa
