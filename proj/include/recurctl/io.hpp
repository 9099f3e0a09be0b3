#pragma once

// JSON and CSV forms of sequences, plans, reports and chain specs. Generator
// and mode indices are 1-based in every serialized form.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "recurctl/lie.hpp"
#include "recurctl/oscillators.hpp"
#include "recurctl/propagator.hpp"
#include "recurctl/recurrence.hpp"
#include "recurctl/synthesizer.hpp"

namespace recurctl {

using Json = nlohmann::json;

/// Writes to a sibling temporary file and renames it into place.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("atomic_write: cannot open " + tmp.string());
    os << content;
    os.flush();
    if (!os) throw std::runtime_error("atomic_write: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// --- control sequences -----------------------------------------------------

inline Json to_json(const ControlSequence& seq) {
  Json segs = Json::array();
  for (const auto& s : seq.segments()) {
    Json e{{"k", s.generator + 1}, {"t", s.duration}};
    if (s.reversed) e["reversed"] = true;
    segs.push_back(std::move(e));
  }
  return Json{{"provenance", seq.provenance()},
              {"physical", seq.physical()},
              {"total_time", seq.total_time()},
              {"segments", std::move(segs)}};
}

inline ControlSequence sequence_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("segments") || !j["segments"].is_array()) {
    throw std::invalid_argument("sequence: expected object with a segments array");
  }
  ControlSequence seq({}, j.value("provenance", std::string{}));
  for (const auto& e : j["segments"]) {
    const auto k = e.at("k").get<long long>();
    if (k < 1) throw std::invalid_argument("sequence: generator index must be >= 1");
    seq.append(Segment{static_cast<std::size_t>(k - 1), e.at("t").get<double>(), e.value("reversed", false)});
  }
  return seq;
}

// --- recurrence -------------------------------------------------------------

inline Json to_json(const RecurrencePlan& p) {
  Json j{{"delta", p.delta},
         {"N", p.cut},
         {"T", p.recurrence_time},
         {"achieved_sum", p.achieved_sum},
         {"tail_mass", p.tail_mass},
         {"mode", to_string(p.mode)},
         {"tau_min", p.tau_min},
         {"shift", p.shift},
         {"spectrum_hash", p.spectrum_hash},
         {"decomposition", p.decomposition()},
         {"certified", p.certified()}};
  if (p.energy_bound) j["M"] = *p.energy_bound;
  if (p.spectrum_exhausted) j["spectrum_exhausted"] = true;
  return j;
}

inline std::string trace_csv(const std::vector<ScanSample>& trace) {
  std::ostringstream os;
  os << "T,objective\n";
  for (const auto& s : trace) os << format_double(s.time) << ',' << format_double(s.objective) << '\n';
  return os.str();
}

// --- Lie algebra --------------------------------------------------------------

inline Json to_json(const LieBasis& b) {
  Json basis = Json::array();
  for (const auto& x : b.basis) basis.push_back(to_string(x));
  return Json{{"dimension", b.dimension()},    {"saturated", b.saturated},
              {"degree_cap", b.degree_cap},    {"dim_cap", b.dim_cap},
              {"degree_cap_hit", b.degree_cap_hit}, {"dim_cap_hit", b.dim_cap_hit},
              {"basis", std::move(basis)}};
}

inline Json to_json(const PropagationResult& r) {
  Json modes = Json::array();
  for (auto m : r.target_modes) modes.push_back(m + 1);
  return Json{{"verdict", to_string(r.verdict)},
              {"reason", r.reason},
              {"target_modes", std::move(modes)},
              {"targets_checked", r.targets_checked},
              {"targets_missing", r.targets_missing},
              {"closure_dimension", r.closure.dimension()},
              {"closure_saturated", r.closure.saturated}};
}

inline Json to_json(const ChainVerdict& v) {
  Json edges = Json::array();
  for (const auto& e : v.edges) {
    edges.push_back(Json{{"from", e.from + 1},
                         {"to", e.to + 1},
                         {"verdict", to_string(e.verdict)},
                         {"closure_dimension", e.closure_dimension},
                         {"saturated", e.saturated},
                         {"targets_missing", e.targets_missing},
                         {"reason", e.reason}});
  }
  Json reached = Json::array(), unreached = Json::array();
  for (auto m : v.reached) reached.push_back(m + 1);
  for (auto m : v.unreached) unreached.push_back(m + 1);
  return Json{{"verdict", to_string(v.overall)},
              {"message", v.message},
              {"edges", std::move(edges)},
              {"reached", std::move(reached)},
              {"unreached", std::move(unreached)}};
}

// --- chain specs ---------------------------------------------------------------

inline Json to_json(const ChainSpec& s) {
  Json couplings = Json::array();
  for (const auto& c : s.couplings) couplings.push_back(Json::array({c.i + 1, c.j + 1, c.strength}));
  Json sites = Json::array();
  for (auto m : s.control_sites) sites.push_back(m + 1);
  Json j{{"n_modes", s.n_modes},
         {"omega", s.omega},
         {"couplings", std::move(couplings)},
         {"control_sites", std::move(sites)},
         {"control_degree_cap", s.control_degree_cap}};
  if (!s.controls.empty()) {
    Json controls = Json::array();
    for (const auto& c : s.controls) controls.push_back(to_string(c));
    j["controls"] = std::move(controls);
  }
  return j;
}

// --- reports -------------------------------------------------------------------

struct ReportOptions {
  bool include_sequences = false;
  bool include_wall_clock = false;
};

inline Json to_json(const CompileResult& r, const ReportOptions& opt = {}) {
  Json attempts = Json::array();
  for (const auto& a : r.attempts) attempts.push_back(Json{{"n", a.n}, {"distance", a.distance}, {"segments", a.segments}});
  Json certs = Json::array();
  for (const auto& [k, p] : r.certificates) {
    Json c = to_json(p);
    c["k"] = k + 1;
    certs.push_back(std::move(c));
  }
  Json j{{"n", r.n},
         {"distance", r.distance},
         {"fidelity", r.fidelity},
         {"segments", r.sequence.size()},
         {"inversions", r.inversions},
         {"physical", r.sequence.physical()},
         {"attempts", std::move(attempts)},
         {"certificates", std::move(certs)}};
  if (opt.include_sequences) j["sequence"] = to_json(r.sequence);
  return j;
}

inline Json to_json(const ReachabilityReport& rep, const ReportOptions& opt = {}) {
  Json entries = Json::array();
  for (const auto& e : rep.entries) {
    Json j{{"name", e.name}, {"expression", e.expression}, {"t", e.t}, {"success", e.success}};
    if (!e.error.empty()) j["error"] = e.error;
    if (e.result.n > 0) j["result"] = to_json(e.result, opt);
    if (opt.include_wall_clock) j["wall_seconds"] = e.wall_seconds;
    entries.push_back(std::move(j));
  }
  return Json{{"epsilon", rep.epsilon},
              {"targets", rep.entries.size()},
              {"failures", rep.failures()},
              {"entries", std::move(entries)}};
}

inline std::string summary_csv(const ReachabilityReport& rep) {
  std::ostringstream os;
  os << "name,expression,t,success,n,distance,fidelity,segments,inversions\n";
  for (const auto& e : rep.entries) {
    std::string expr = e.expression;
    for (auto& ch : expr) {
      if (ch == '"') ch = '\'';
    }
    os << e.name << ",\"" << expr << "\"," << format_double(e.t) << ',' << (e.success ? "true" : "false") << ','
       << e.result.n << ',' << format_double(e.result.distance) << ',' << format_double(e.result.fidelity) << ','
       << e.result.sequence.size() << ',' << e.result.inversions << '\n';
  }
  return os.str();
}

/// Writes the matrix as raw little-endian (re, im) pairs in column-major
/// order, plus a JSON sidecar with the shape and the truncation.
inline void write_matrix_with_sidecar(const Matrix& m, const TruncationSpec& spec, const std::filesystem::path& path,
                                      const std::string& source) {
  write_matrix_binary(m, path);
  std::filesystem::path side = path;
  side += ".json";
  write_json(side, Json{{"rows", m.rows()},
                        {"cols", m.cols()},
                        {"layout", "column-major complex128"},
                        {"dims", spec.dims},
                        {"buffer", spec.buffer},
                        {"source", source}});
}

}  // namespace recurctl
