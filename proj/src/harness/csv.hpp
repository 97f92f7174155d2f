#pragma once

// CSV dialect: comma separated, LF line endings, reals with 17 significant
// digits, booleans as true/false. Every file opens with a comment line
// carrying the config hash and master seed, then the header row.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace snmdp::harness {

std::string format_real(double v);
std::string hex64(std::uint64_t v);

struct FileHeader {
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  std::string subcommand;
  std::string line() const;
};

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const FileHeader& header, const std::vector<std::string>& columns);

  template <class... Ts>
  void row(const Ts&... values) {
    std::string line;
    bool first = true;
    ((append(line, first, values)), ...);
    line += '\n';
    out_ << line;
  }

  void close();
  const std::filesystem::path& path() const { return path_; }

 private:
  static void cell(std::string& line, bool v) { line += v ? "true" : "false"; }
  static void cell(std::string& line, double v) { line += format_real(v); }
  static void cell(std::string& line, std::string_view v);
  template <class T, std::enable_if_t<std::is_integral_v<T> && !std::is_same_v<T, bool>, int> = 0>
  static void cell(std::string& line, T v) {
    line += std::to_string(v);
  }
  static void cell(std::string& line, const char* v) { cell(line, std::string_view(v)); }
  static void cell(std::string& line, const std::string& v) { cell(line, std::string_view(v)); }

  template <class T>
  static void append(std::string& line, bool& first, const T& v) {
    if (!first) line += ',';
    first = false;
    cell(line, v);
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

// Splits CSV text into rows of fields, skipping '#' comment lines. Handles
// double-quoted fields.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace snmdp::harness
