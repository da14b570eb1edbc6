#pragma once

// Text checkpoint holding named matrices plus string metadata.
//
//   lightn-checkpoint 1
//   meta <key> <value...>
//   tensor <name> <rows> <cols>
//   <row 0: cols values>
//   ...
//   end
//
// Values use the shortest decimal that round-trips a 64-bit double, so a
// save/load cycle is lossless. Blank lines and lines starting with '#' are
// ignored.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "lightn/errors.hpp"
#include "lightn/matrix.hpp"

namespace lightn {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

struct Checkpoint {
  static constexpr int kVersion = 1;

  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void set_meta(const std::string& key, const std::string& value) {
    for (auto& [k, v] : meta)
      if (k == key) {
        v = value;
        return;
      }
    meta.emplace_back(key, value);
  }

  const std::string& get_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    throw FormatError("checkpoint: missing meta key '" + key + "'");
  }

  bool has_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return true;
    return false;
  }

  const Matrix& tensor(const std::string& name) const {
    for (const auto& [k, m] : tensors)
      if (k == name) return m;
    throw FormatError("checkpoint: missing tensor '" + name + "'");
  }

  void write(std::ostream& os) const {
    os << "lightn-checkpoint " << kVersion << '\n';
    for (const auto& [k, v] : meta) os << "meta " << k << ' ' << v << '\n';
    for (const auto& [name, m] : tensors) {
      os << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
      for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
          if (j) os << ' ';
          os << format_double(m(i, j));
        }
        os << '\n';
      }
    }
    os << "end\n";
  }

  static Checkpoint read(std::istream& is) {
    Checkpoint ck;
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() -> bool {
      while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        return true;
      }
      return false;
    };
    if (!next_line()) throw FormatError("checkpoint: empty input");
    {
      std::istringstream hs(line);
      std::string magic;
      int version = 0;
      if (!(hs >> magic >> version) || magic != "lightn-checkpoint") {
        throw FormatError("checkpoint: bad header", lineno);
      }
      if (version != kVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version), lineno);
      }
    }
    bool ended = false;
    while (next_line()) {
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "end") {
        ended = true;
        break;
      }
      if (tag == "meta") {
        std::string key;
        ls >> key;
        std::string value;
        std::getline(ls >> std::ws, value);
        if (key.empty()) throw FormatError("checkpoint: meta without key", lineno);
        ck.meta.emplace_back(key, value);
      } else if (tag == "tensor") {
        std::string name;
        std::size_t r = 0, c = 0;
        if (!(ls >> name >> r >> c)) throw FormatError("checkpoint: bad tensor header", lineno);
        Matrix m(r, c);
        for (std::size_t i = 0; i < r; ++i) {
          if (!next_line()) throw FormatError("checkpoint: truncated tensor '" + name + "'", lineno);
          std::istringstream rs(line);
          std::string tok;
          std::size_t j = 0;
          while (rs >> tok) {
            if (j >= c) throw FormatError("checkpoint: too many values in row", lineno);
            if (!parse_double(tok, m(i, j))) throw FormatError("checkpoint: bad number '" + tok + "'", lineno);
            ++j;
          }
          if (j != c) throw FormatError("checkpoint: expected " + std::to_string(c) + " values", lineno);
        }
        ck.tensors.emplace_back(name, std::move(m));
      } else {
        throw FormatError("checkpoint: unknown record '" + tag + "'", lineno);
      }
    }
    if (!ended) throw FormatError("checkpoint: missing 'end'", lineno);
    return ck;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write(os);
    if (!os) throw std::runtime_error("write to '" + path + "' failed");
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    return read(is);
  }
};

}  // namespace lightn
