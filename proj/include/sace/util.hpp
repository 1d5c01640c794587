#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sace {

// Row-major dense matrix, just enough for design matrices.
struct Matrix {
  size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double* row(size_t i) { return data.data() + i * cols; }
  const double* row(size_t i) const { return data.data() + i * cols; }
  double& operator()(size_t i, size_t j) { return data[i * cols + j]; }
  double operator()(size_t i, size_t j) const { return data[i * cols + j]; }
};

// shortest representation that parses back to the same double
std::string fmt_double(double v);
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);
std::vector<double> parse_double_list(std::string_view s, std::string_view what);
std::string join_doubles(std::span<const double> v);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

uint64_t fnv1a(std::string_view s, uint64_t h = 1469598103934665603ULL);
std::string hex64(uint64_t v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
void ensure_dir(const std::string& path);

}  // namespace sace
