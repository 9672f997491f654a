#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfa {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double x);

struct TwoColumn {
  std::vector<double> x;
  std::vector<double> y;
};

/// Writes "x_name,y_name" followed by one row per point.
void write_two_column_csv(const std::filesystem::path& path, std::string_view x_name,
                          std::string_view y_name, std::span<const double> x,
                          std::span<const double> y);

/// Any number of equal-length numeric columns.
void write_columns_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                       const std::vector<std::span<const double>>& columns);

/// Reads a file written by write_two_column_csv. Throws std::runtime_error on
/// malformed rows or a missing file.
TwoColumn read_two_column_csv(const std::filesystem::path& path);

}  // namespace mfa
