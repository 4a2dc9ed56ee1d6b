#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdds/engine.hpp"

namespace sdds {

// Shortest decimal that round-trips to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

// Writes to a temporary sibling and renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << content;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Column order of the trace CSV. x_i and s_i repeat for i = 1..n.
inline std::vector<std::string> trace_columns(int n) {
  std::vector<std::string> cols = {"k",           "delta",    "outcome", "direction_index", "f0",
                                   "fs",          "n_samples", "evaluations", "cap_hit",     "skipped",
                                   "oracle_f",    "oracle_grad_norm"};
  for (int i = 1; i <= n; ++i) cols.push_back("x_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) cols.push_back("s_" + std::to_string(i));
  return cols;
}

// One row per iteration record, then a row with outcome "final" holding the
// state the run stopped at (poll columns empty).
inline std::string trace_to_csv(const RunTrace& trace, int n) {
  std::ostringstream os;
  const auto cols = trace_columns(n);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\r\n";
  for (const auto& r : trace.records) {
    os << r.k << ',' << format_real(r.delta) << ',' << to_string(r.outcome) << ',';
    if (r.direction_index) os << *r.direction_index;
    os << ',' << format_real(r.f0) << ',';
    if (r.direction_index) os << format_real(r.fs);
    os << ',' << r.n_samples << ',' << r.evaluations << ',' << (r.cap_hit ? 1 : 0) << ',' << r.skipped << ','
       << format_real(r.oracle_f) << ',' << format_real(r.oracle_grad_norm);
    for (int i = 0; i < n; ++i) os << ',' << format_real(r.x[i]);
    for (int i = 0; i < n; ++i) {
      os << ',';
      if (r.s) os << format_real((*r.s)[i]);
    }
    os << "\r\n";
  }
  const auto& f = trace.final_state;
  os << f.k << ',' << format_real(f.delta) << ",final,,,,,,,," << format_real(f.oracle_f) << ','
     << format_real(f.oracle_grad_norm);
  for (int i = 0; i < n; ++i) os << ',' << format_real(f.x[i]);
  for (int i = 0; i < n; ++i) os << ',';
  os << "\r\n";
  return os.str();
}

inline nlohmann::json config_to_json(const SddsConfig& c) {
  return {{"delta0", c.delta0},
          {"eps_f", c.eps_f},
          {"gamma", c.gamma},
          {"c", c.c},
          {"p", c.p},
          {"tau", c.tau},
          {"j_max", c.j_max},
          {"delta_max", c.delta_max()},
          {"beta", c.beta},
          {"nu", c.nu},
          {"poll_scheme", to_string(c.poll_scheme)},
          {"poll_mode", to_string(c.poll_mode)},
          {"randomize_poll_order", c.randomize_poll_order},
          {"seed", c.seed},
          {"max_iterations", c.max_iterations},
          {"sample_cap", c.sample_cap}};
}

inline nlohmann::json trace_sidecar(const RunTrace& trace, int n) {
  nlohmann::json j;
  j["config"] = config_to_json(trace.config);
  j["problem"] = trace.problem_name;
  j["stop"] = {{"grad_tol", trace.stop.grad_tol ? nlohmann::json(*trace.stop.grad_tol) : nlohmann::json()},
               {"delta_floor", trace.stop.delta_floor}};
  j["termination"] = to_string(trace.termination);
  j["iterations"] = trace.records.size();
  j["total_blackbox_evals"] = trace.total_blackbox_evals;
  j["cap_hits"] = trace.cap_hits;
  std::vector<double> x(trace.final_state.x.data(), trace.final_state.x.data() + trace.final_state.x.size());
  j["final"] = {{"k", trace.final_state.k},
                {"delta", trace.final_state.delta},
                {"x", x},
                {"oracle_f", trace.final_state.oracle_f},
                {"oracle_grad_norm", trace.final_state.oracle_grad_norm}};
  j["columns"] = trace_columns(n);
  return j;
}

// Minimal RFC-4180 reader: rows of fields, header included.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    any = true;
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r' || ch == '\n') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += ch;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace sdds
