#include "csv.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "snmdp/error.hpp"

namespace snmdp::harness {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string FileHeader::line() const {
  return "# config_hash=" + hex64(config_hash) + " master_seed=" + std::to_string(master_seed) +
         " subcommand=" + subcommand;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const FileHeader& header,
                     const std::vector<std::string>& columns)
    : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot write '" + path.string() + "'");
  std::string line = header.line() + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) line += ',';
    line += columns[i];
  }
  out_ << line << '\n';
}

void CsvWriter::cell(std::string& line, std::string_view v) {
  if (v.find_first_of(",\"\n") == std::string_view::npos) {
    line += v;
    return;
  }
  line += '"';
  for (char c : v) {
    if (c == '"') line += '"';
    line += c;
  }
  line += '"';
}

void CsvWriter::close() {
  out_.flush();
  if (!out_) throw Error("write failed for '" + path_.string() + "'");
  out_.close();
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          fields.back() += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.emplace_back();
      } else {
        fields.back() += c;
      }
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace snmdp::harness
