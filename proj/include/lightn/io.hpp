#pragma once

// Point cloud text formats.
//   xyz: one point per line, three whitespace-separated reals.
//   csv: header line `x,y,z`, then one comma-separated point per line.
// Blank lines are skipped. Output uses the shortest round-trip decimal.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lightn/checkpoint.hpp"
#include "lightn/errors.hpp"
#include "lightn/pointcloud.hpp"

namespace lightn {

enum class CloudFormat { xyz, csv };

inline std::string to_string(CloudFormat f) { return f == CloudFormat::xyz ? "xyz" : "csv"; }

inline CloudFormat parse_cloud_format(const std::string& s) {
  if (s == "xyz") return CloudFormat::xyz;
  if (s == "csv") return CloudFormat::csv;
  throw ConfigError("unknown point cloud format '" + s + "' (expected xyz or csv)");
}

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line, CloudFormat f) {
  std::vector<std::string_view> out;
  if (f == CloudFormat::csv) {
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      out.push_back(trim(line.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t b = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}
}  // namespace detail

inline PointCloud read_pointcloud(std::istream& is, CloudFormat format) {
  PointCloud pc;
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = format != CloudFormat::csv;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "x,y,z") throw FormatError("csv: expected header 'x,y,z'", line_no);
      header_seen = true;
      continue;
    }
    const auto fields = detail::split_fields(line, format);
    if (fields.size() != 3) {
      throw FormatError("expected 3 columns, found " + std::to_string(fields.size()), line_no);
    }
    Point p{};
    for (std::size_t c = 0; c < 3; ++c) {
      if (!parse_double(fields[c], p[c])) {
        throw FormatError("cannot parse '" + std::string(fields[c]) + "' as a number", line_no);
      }
      if (!std::isfinite(p[c])) throw FormatError("non-finite coordinate", line_no);
    }
    pc.points.push_back(p);
  }
  if (pc.empty()) throw FormatError("point cloud file contains no points");
  return pc;
}

inline void write_pointcloud(std::ostream& os, const PointCloud& pc, CloudFormat format) {
  const char sep = format == CloudFormat::csv ? ',' : ' ';
  if (format == CloudFormat::csv) os << "x,y,z\n";
  for (const Point& p : pc.points) os << format_double(p[0]) << sep << format_double(p[1]) << sep << format_double(p[2]) << '\n';
}

inline PointCloud load_pointcloud(const std::string& path, CloudFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return read_pointcloud(in, format);
}

inline void save_pointcloud(const PointCloud& pc, const std::string& path, CloudFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_pointcloud(out, pc, format);
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace lightn
