#pragma once

// Parameters of one command-line run. Serialized as `key = value` lines so a
// report can carry the exact configuration that produced it.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "lightn/checkpoint.hpp"
#include "lightn/dataset.hpp"
#include "lightn/errors.hpp"
#include "lightn/model.hpp"
#include "lightn/projection.hpp"

namespace lightn {

struct RunConfig {
  // sampling
  std::size_t m = 16;
  std::string sampler = "fps";  // fps | random | voxel | lightn
  std::string mode = "matched";  // lightn evaluation: soft | matched
  std::uint64_t seed = 1;
  std::string variant = "self_correlation";
  std::size_t proj_k = 7;
  std::string temperature_fn = "exp";

  // losses
  double alpha = 1.0;
  double beta = 1.0;
  double delta = 1.0;

  // training
  std::size_t epochs = 15;       // sampler
  std::size_t task_epochs = 30;
  double learning_rate = 0.001;  // sampler
  double task_learning_rate = 0.003;
  std::size_t batch_size = 32;

  // synthetic dataset
  std::vector<std::string> classes{"sphere", "cube_surface", "cylinder", "two_spheres"};
  std::size_t n = 256;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::uint64_t data_seed = 11;

  // bench / flops
  std::vector<std::size_t> m_list{16, 32};
  std::size_t flops_n = 1024;

  // files
  std::vector<std::string> inputs;
  std::string output;
  std::string format = "xyz";
  std::string task_checkpoint;
  std::string sampler_checkpoint;

  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
  void validate() const;
};

namespace detail {
inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (v.empty() || v.front() == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double x = 0.0;
  if (!parse_double(v, x) || !std::isfinite(x)) {
    throw ConfigError("config: '" + key + "' expects a finite real, got '" + v + "'");
  }
  return x;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string tok; std::getline(ss, tok, ',');) {
    const auto b = tok.find_first_not_of(' ');
    const auto e = tok.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(tok.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}
}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "m") m = parse_count(key, value);
  else if (key == "sampler") sampler = value;
  else if (key == "mode") mode = value;
  else if (key == "seed") seed = parse_count(key, value);
  else if (key == "variant") variant = value;
  else if (key == "proj_k") proj_k = parse_count(key, value);
  else if (key == "temperature_fn") temperature_fn = value;
  else if (key == "alpha") alpha = parse_real(key, value);
  else if (key == "beta") beta = parse_real(key, value);
  else if (key == "delta") delta = parse_real(key, value);
  else if (key == "epochs") epochs = parse_count(key, value);
  else if (key == "task_epochs") task_epochs = parse_count(key, value);
  else if (key == "learning_rate") learning_rate = parse_real(key, value);
  else if (key == "task_learning_rate") task_learning_rate = parse_real(key, value);
  else if (key == "batch_size") batch_size = parse_count(key, value);
  else if (key == "classes") classes = split_list(value);
  else if (key == "n") n = parse_count(key, value);
  else if (key == "train_per_class") train_per_class = parse_count(key, value);
  else if (key == "test_per_class") test_per_class = parse_count(key, value);
  else if (key == "data_seed") data_seed = parse_count(key, value);
  else if (key == "m_list") {
    m_list.clear();
    for (const std::string& s : split_list(value)) m_list.push_back(parse_count(key, s));
  } else if (key == "flops_n") flops_n = parse_count(key, value);
  else if (key == "inputs") inputs = split_list(value);
  else if (key == "output") output = value;
  else if (key == "format") format = value;
  else if (key == "task_checkpoint") task_checkpoint = value;
  else if (key == "sampler_checkpoint") sampler_checkpoint = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

// Reads `key = value` lines; '#' starts a comment line.
inline void apply_config_text(RunConfig& cfg, std::istream& is) {
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto b = raw.find_first_not_of(" \t\r");
    if (b == std::string::npos || raw[b] == '#') continue;
    const auto eq = raw.find('=');
    if (eq == std::string::npos) throw FormatError("config: expected 'key = value'", line_no);
    auto strip = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r");
      const auto r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    const std::string key = strip(raw.substr(0, eq));
    try {
      cfg.set(key, strip(raw.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw FormatError(e.what(), line_no);
    }
  }
}

inline std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "m = " << m << '\n'
     << "sampler = " << sampler << '\n'
     << "mode = " << mode << '\n'
     << "seed = " << seed << '\n'
     << "variant = " << variant << '\n'
     << "proj_k = " << proj_k << '\n'
     << "temperature_fn = " << temperature_fn << '\n'
     << "alpha = " << format_double(alpha) << '\n'
     << "beta = " << format_double(beta) << '\n'
     << "delta = " << format_double(delta) << '\n'
     << "epochs = " << epochs << '\n'
     << "task_epochs = " << task_epochs << '\n'
     << "learning_rate = " << format_double(learning_rate) << '\n'
     << "task_learning_rate = " << format_double(task_learning_rate) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "classes = " << detail::join(classes) << '\n'
     << "n = " << n << '\n'
     << "train_per_class = " << train_per_class << '\n'
     << "test_per_class = " << test_per_class << '\n'
     << "data_seed = " << data_seed << '\n'
     << "m_list = " << detail::join(m_list) << '\n'
     << "flops_n = " << flops_n << '\n'
     << "inputs = " << detail::join(inputs) << '\n'
     << "output = " << output << '\n'
     << "format = " << format << '\n'
     << "task_checkpoint = " << task_checkpoint << '\n'
     << "sampler_checkpoint = " << sampler_checkpoint << '\n';
  return os.str();
}

inline void RunConfig::validate() const {
  if (m < 1) throw ConfigError("config: m must be >= 1");
  if (sampler != "fps" && sampler != "random" && sampler != "voxel" && sampler != "lightn") {
    throw ConfigError("config: sampler must be one of fps, random, voxel, lightn");
  }
  if (mode != "soft" && mode != "matched") throw ConfigError("config: mode must be soft or matched");
  parse_attention_variant(variant);
  parse_temperature_kind(temperature_fn);
  for (const std::string& c : classes) parse_shape_class(c);
  if (classes.empty()) throw ConfigError("config: classes must not be empty");
  if (n < 8) throw ConfigError("config: n must be >= 8");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !(task_learning_rate > 0.0)) throw ConfigError("config: learning rates must be positive");
  if (format != "xyz" && format != "csv") throw ConfigError("config: format must be xyz or csv");
  for (std::size_t v : m_list)
    if (v < 1) throw ConfigError("config: m_list entries must be >= 1");
}

}  // namespace lightn
