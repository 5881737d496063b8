#pragma once

// Data loading and report emission for the experiment harness: triplet
// files, flat key=value configs, trace CSVs, and JSON summaries.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gcg/losses.hpp"
#include "gcg/solver.hpp"
#include "gcg/types.hpp"

namespace gcg {

/// Reads "user<delim>item<delim>rating" lines with 1-based ids. Ids are
/// remapped densely (sorted distinct ids -> 0..k-1), so the returned shape
/// is the number of distinct users/items. Duplicate (user, item) pairs keep
/// the last value; the count of overwritten pairs is reported through
/// `duplicates` when given. '#' starts a comment; blank lines are skipped.
inline MaskedObservations load_triplets(const std::string& path,
                                        char delim = ' ',
                                        std::size_t* duplicates = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");

  struct RawTriple {
    long long user, item;
    double rating;
  };
  std::vector<RawTriple> raw;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (delim != ' ')
      for (char& c : line)
        if (c == delim) c = ' ';
    std::istringstream ls(line);
    long long u, v;
    double r;
    if (!(ls >> u)) {
      std::string probe;
      std::istringstream(line) >> probe;
      if (probe.empty()) continue;  // blank or comment-only line
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": expected integer user id");
    }
    if (!(ls >> v))
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": expected integer item id");
    if (!(ls >> r))
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": expected numeric rating");
    std::string trailing;
    if (ls >> trailing)
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": trailing content '" + trailing + "'");
    if (u < 1 || v < 1)
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": ids are 1-based");
    if (!std::isfinite(r))
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": non-finite rating");
    raw.push_back({u, v, r});
  }
  if (raw.empty()) throw EmptyData(path + ": no triples");

  std::map<long long, Index> user_map, item_map;
  for (const auto& t : raw) {
    user_map.emplace(t.user, 0);
    item_map.emplace(t.item, 0);
  }
  Index next = 0;
  for (auto& [id, idx] : user_map) idx = next++;
  next = 0;
  for (auto& [id, idx] : item_map) idx = next++;

  // last wins on duplicates, preserving first-occurrence order
  std::map<std::pair<Index, Index>, std::size_t> seen;
  std::vector<Triplet> triples;
  std::size_t dup_count = 0;
  for (const auto& t : raw) {
    Index i = user_map[t.user], j = item_map[t.item];
    auto key = std::make_pair(i, j);
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(key, triples.size());
      triples.push_back({i, j, t.rating});
    } else {
      triples[it->second].value = t.rating;
      ++dup_count;
    }
  }
  if (duplicates) *duplicates = dup_count;

  MaskedObservations obs;
  obs.n = static_cast<Index>(user_map.size());
  obs.m = static_cast<Index>(item_map.size());
  obs.train = std::move(triples);
  return obs;
}

/// Writes triples as 1-based "user item rating" lines; load_triplets on the
/// output reproduces the input observations exactly.
inline void write_triplets(const std::string& path,
                           const std::vector<Triplet>& triples) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  char buf[64];
  for (const auto& t : triples) {
    std::snprintf(buf, sizeof(buf), "%.17g", t.value);
    out << (t.row + 1) << ' ' << (t.col + 1) << ' ' << buf << '\n';
  }
}

namespace iodetail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace iodetail

/// Renders a solver trace as CSV with the fixed column set. gap and
/// test_metric cells are empty when unavailable. time_s is emitted only when
/// include_time is set: wall-clock is nondeterministic, and the trace bytes
/// must be reproducible for identical config + seed, so by default timing
/// lives in the JSON summary and the time_s cells stay empty.
inline std::string trace_csv_string(const SolverTrace& trace,
                                    bool include_time = false) {
  std::string out = "iter,time_s,objective,rho,eta,theta,atoms,gap,test_metric\n";
  for (const auto& r : trace) {
    out += std::to_string(r.t);
    out += ',';
    if (include_time) out += iodetail::fmt(r.time_s);
    out += ',';
    out += iodetail::fmt(r.objective);
    out += ',';
    out += iodetail::fmt(r.rho);
    out += ',';
    out += iodetail::fmt(r.eta);
    out += ',';
    out += iodetail::fmt(r.theta);
    out += ',';
    out += std::to_string(r.atoms);
    out += ',';
    if (r.gap && std::isfinite(*r.gap)) out += iodetail::fmt(*r.gap);
    out += ',';
    if (r.test_metric) out += iodetail::fmt(*r.test_metric);
    out += '\n';
  }
  return out;
}

inline void write_trace_csv(const std::string& path, const SolverTrace& trace,
                            bool include_time = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << trace_csv_string(trace, include_time);
}

/// Flat key=value configuration: one assignment per line, '#' comments.
using FlatConfig = std::map<std::string, std::string>;

inline FlatConfig parse_flat_config(const std::string& text) {
  FlatConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    auto a = s.find_first_not_of(" \t\r");
    auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) +
                       ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ParseError("config line " + std::to_string(lineno) +
                       ": empty key");
    cfg[key] = value;
  }
  return cfg;
}

inline FlatConfig load_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_flat_config(ss.str());
}

/// Applies a "key=value" override (the --set flag).
inline void apply_override(FlatConfig& cfg, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set: expected key=value, got '" + assignment + "'");
  cfg[assignment.substr(0, eq)] = assignment.substr(eq + 1);
}

namespace iodetail {

inline double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

}  // namespace iodetail

inline std::string cfg_string(const FlatConfig& cfg, const std::string& key,
                              const std::string& fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

inline std::string cfg_require(const FlatConfig& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw ConfigError(key + ": required key is missing");
  return it->second;
}

inline double cfg_double(const FlatConfig& cfg, const std::string& key,
                         double fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : iodetail::to_double(key, it->second);
}

inline long long cfg_int(const FlatConfig& cfg, const std::string& key,
                         long long fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : iodetail::to_int(key, it->second);
}

inline bool cfg_bool(const FlatConfig& cfg, const std::string& key,
                     bool fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + it->second + "'");
}

}  // namespace gcg
