#pragma once

// Chains of coupled oscillators in the rotating-wave form, controlled on a
// subset of sites.

#include <algorithm>
#include <deque>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "recurctl/fock.hpp"
#include "recurctl/lie.hpp"
#include "recurctl/propagator.hpp"
#include "recurctl/synthesizer.hpp"
#include "recurctl/weyl.hpp"

namespace recurctl {

struct Coupling {
  std::size_t i = 0;
  std::size_t j = 0;
  double strength = 0.0;  // a_ij
};

struct ChainSpec {
  std::size_t n_modes = 2;
  double omega = 1.0;
  std::vector<Coupling> couplings;
  std::vector<std::size_t> control_sites{0};
  unsigned control_degree_cap = 3;
  /// Explicit control Hamiltonians; empty means the default set at each site.
  std::vector<PolyOp> controls;

  /// Nearest-neighbour chain with a_{i,i+1} = strength.
  static ChainSpec open_chain(std::size_t n, double omega, double strength = 1.0) {
    ChainSpec s;
    s.n_modes = n;
    s.omega = omega;
    for (std::size_t i = 0; i + 1 < n; ++i) s.couplings.push_back({i, i + 1, strength});
    s.validate();
    return s;
  }

  void validate() const {
    if (n_modes == 0) throw std::invalid_argument("ChainSpec: n_modes must be >= 1");
    if (!(omega >= 0.0)) throw std::invalid_argument("ChainSpec: omega must be >= 0");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& c : couplings) {
      if (c.i >= n_modes || c.j >= n_modes) throw std::out_of_range("ChainSpec: coupling mode out of range");
      if (c.i == c.j) throw std::invalid_argument("ChainSpec: a_ii must be 0");
      if (!(c.strength >= 0.0)) throw std::invalid_argument("ChainSpec: a_ij must be >= 0");
      if (!seen.insert(std::minmax(c.i, c.j)).second) {
        throw std::invalid_argument("ChainSpec: coupling listed twice");
      }
    }
    for (std::size_t s : control_sites) {
      if (s >= n_modes) throw std::out_of_range("ChainSpec: control site out of range");
    }
    if (control_degree_cap < 1) throw std::invalid_argument("ChainSpec: control_degree_cap must be >= 1");
    for (const auto& c : controls) {
      if (c.mode_count() != n_modes) throw std::invalid_argument("ChainSpec: control has wrong mode count");
      if (!is_hermitian(c, 1e-12)) throw std::invalid_argument("ChainSpec: control is not hermitian");
    }
  }

  /// a_ij, symmetric; 0 for uncoupled pairs.
  double coupling(std::size_t i, std::size_t j) const {
    for (const auto& c : couplings) {
      if ((c.i == i && c.j == j) || (c.i == j && c.j == i)) return c.strength;
    }
    return 0.0;
  }
};

/// p_i^2 + q_i^2 + p_j^2 + q_j^2 + omega (p_i - p_j)^2 + omega (q_i - q_j)^2.
inline PolyOp coupling_hamiltonian(std::size_t i, std::size_t j, double omega, std::size_t mode_count) {
  if (i == j) throw std::invalid_argument("coupling_hamiltonian: i must differ from j");
  if (i >= mode_count || j >= mode_count) throw std::out_of_range("coupling_hamiltonian: mode out of range");
  const PolyOp qi = PolyOp::position(i, mode_count), pi = PolyOp::momentum(i, mode_count);
  const PolyOp qj = PolyOp::position(j, mode_count), pj = PolyOp::momentum(j, mode_count);
  const PolyOp dp = pi - pj, dq = qi - qj;
  PolyOp h = pi * pi + qi * qi + pj * pj + qj * qj + omega * (dp * dp) + omega * (dq * dq);
  return h.with_role(Role::hermitian);
}

/// sum over listed pairs of a_ij H_ij.
inline PolyOp drift(const ChainSpec& spec) {
  spec.validate();
  PolyOp out(spec.n_modes);
  for (const auto& c : spec.couplings) {
    if (c.strength != 0.0) out += c.strength * coupling_hamiltonian(c.i, c.j, spec.omega, spec.n_modes);
  }
  return out.with_role(Role::hermitian);
}

/// {q, p, q^2, q^3} on one site, keeping those of degree <= cap.
inline std::vector<PolyOp> default_site_controls(std::size_t site, std::size_t mode_count, unsigned cap) {
  const PolyOp q = PolyOp::position(site, mode_count), p = PolyOp::momentum(site, mode_count);
  std::vector<PolyOp> out;
  if (cap >= 1) {
    out.push_back(q);
    out.push_back(p);
  }
  if (cap >= 2) out.push_back((q * q).with_role(Role::hermitian));
  if (cap >= 3) out.push_back((q * q * q).with_role(Role::hermitian));
  return out;
}

/// The control Hamiltonians H'_j (without drift).
inline std::vector<PolyOp> control_hamiltonians(const ChainSpec& spec) {
  spec.validate();
  if (!spec.controls.empty()) {
    std::vector<PolyOp> out;
    for (const auto& c : spec.controls) out.push_back(c.with_role(Role::hermitian));
    return out;
  }
  std::vector<PolyOp> out;
  for (std::size_t s : spec.control_sites) {
    for (auto& c : default_site_controls(s, spec.n_modes, spec.control_degree_cap)) out.push_back(std::move(c));
  }
  return out;
}

/// Hamiltonians H~_0 and H~_0 + H'_j, in that order.
inline std::vector<PolyOp> control_hamiltonian_set(const ChainSpec& spec) {
  if (spec.control_sites.empty() && spec.controls.empty()) {
    throw std::invalid_argument("control_system: no control sites");
  }
  const PolyOp h0 = drift(spec);
  std::vector<PolyOp> out{h0};
  for (const auto& c : control_hamiltonians(spec)) out.push_back((h0 + c).with_role(Role::hermitian));
  return out;
}

/// The skew-hermitian generator set -i H~ for every Hamiltonian above.
inline std::vector<PolyOp> control_system(const ChainSpec& spec) {
  std::vector<PolyOp> out;
  for (const auto& h : control_hamiltonian_set(spec)) out.push_back(to_skew(h).with_role(Role::skew_hermitian));
  return out;
}

/// Terms of a PolyOp acting on `mode` alone.
inline PolyOp single_mode_part(const PolyOp& a, std::size_t mode) {
  PolyOp out(a.mode_count());
  for (const auto& [m, c] : a.terms()) {
    bool only = !m.is_identity() && m.touches(mode);
    for (std::size_t k = 0; k < a.mode_count() && only; ++k) {
      if (k != mode && m.touches(k)) only = false;
    }
    if (only) out.add_term(m, c);
  }
  return out.with_role(a.role());
}

struct EdgeVerdict {
  std::size_t from = 0;
  std::size_t to = 0;
  Verdict verdict = Verdict::unknown;
  std::size_t closure_dimension = 0;
  bool saturated = false;
  std::size_t targets_missing = 0;
  std::string reason;
};

struct ChainVerdict {
  Verdict overall = Verdict::unknown;
  std::vector<EdgeVerdict> edges;
  std::vector<std::size_t> reached;
  std::vector<std::size_t> unreached;
  std::string message;
};

/// Walks the coupling graph breadth-first from the control sites. The
/// algebra known at a control site is the closure of its controls and the
/// drift's single-mode part there; a mode reached by propagation carries
/// every capped single-mode generator.
inline ChainVerdict chain_controllability(const ChainSpec& spec, const ClosureCaps& caps = {}) {
  spec.validate();
  const std::size_t n = spec.n_modes;
  const PolyOp h0 = drift(spec);
  const auto controls = control_hamiltonians(spec);

  std::vector<std::optional<LieBasis>> local(n);
  std::vector<std::size_t> sites = spec.control_sites;
  for (const auto& c : spec.controls) {
    for (std::size_t m = 0; m < n; ++m) {
      if (c.touches(m) && std::find(sites.begin(), sites.end(), m) == sites.end()) sites.push_back(m);
    }
  }
  if (sites.empty()) throw std::invalid_argument("chain_controllability: no control sites");
  for (std::size_t s : sites) {
    std::vector<PolyOp> gens;
    for (const auto& c : controls) {
      if (c.touches(s)) gens.push_back(to_skew(c).with_role(Role::skew_hermitian));
    }
    const PolyOp own = single_mode_part(h0, s);
    if (!own.is_zero()) gens.push_back(to_skew(own.with_role(Role::hermitian)).with_role(Role::skew_hermitian));
    if (gens.empty()) continue;
    local[s] = lie_closure(std::span<const PolyOp>(gens), caps);
  }

  ChainVerdict out;
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < n; ++s) {
    if (local[s]) queue.push_back(s);
  }
  bool any_unknown = false;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    for (const auto& c : spec.couplings) {
      if (c.strength == 0.0 || (c.i != i && c.j != i)) continue;
      const std::size_t j = c.i == i ? c.j : c.i;
      if (local[j]) continue;
      const PolyOp coupling = (c.strength * coupling_hamiltonian(i, j, spec.omega, n)).with_role(Role::hermitian);
      const PropagationResult r = algebraic_propagation_check(*local[i], coupling, caps);
      EdgeVerdict e{i, j, r.verdict, r.closure.dimension(), r.closure.saturated, r.targets_missing, r.reason};
      out.edges.push_back(e);
      if (r.verdict == Verdict::propagates) {
        local[j] = lie_closure(single_mode_generators(j, n, caps.degree_cap), caps);
        queue.push_back(j);
      } else if (r.verdict == Verdict::unknown) {
        any_unknown = true;
      }
    }
  }

  for (std::size_t m = 0; m < n; ++m) (local[m] ? out.reached : out.unreached).push_back(m);
  if (out.unreached.empty()) {
    out.overall = Verdict::propagates;
    out.message = "propagates to every mode";
  } else {
    // An undecided edge might still have reached the missing modes.
    out.overall = any_unknown ? Verdict::unknown : Verdict::fails;
    std::string list;
    for (std::size_t m : out.unreached) list += (list.empty() ? "" : ", ") + std::to_string(m + 1);
    out.message = "not propagatable to modes {" + list + "}";
  }
  return out;
}

struct ChainDemoConfig {
  std::size_t dim_per_mode = 8;
  std::size_t buffer = 0;
  std::vector<std::size_t> initial_levels;  // Fock levels per mode; empty means the vacuum
  ReachabilityConfig reach{};
};

/// The drift alone and the bracket of the first control with the drift, both
/// at t. Index 0 is the pure drift, 1 the drift plus the first control.
inline std::vector<ReachTarget> default_chain_targets(const ChainSpec& spec, double t = 0.5) {
  std::vector<ReachTarget> out;
  out.push_back({"drift", GeneratorExpr::leaf(0), t});
  if (control_hamiltonians(spec).size() >= 1) {
    out.push_back({"bracket_control_drift", GeneratorExpr::bracket(GeneratorExpr::leaf(1), GeneratorExpr::leaf(0)), t});
  }
  return out;
}

inline GeneratorSet chain_generators(const ChainSpec& spec, const ChainDemoConfig& config) {
  const auto spec_t = TruncationSpec::uniform(spec.n_modes, config.dim_per_mode, config.buffer);
  GeneratorSet gens(control_system(spec), spec_t);
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const auto& e = gens.at(k).spectrum.eigenvalues;
    if (e.size() == 0 || !std::isfinite(e(0))) throw std::logic_error("chain_generators: spectrum not bounded below");
  }
  return gens;
}

inline StateVector chain_initial_state(const TruncationSpec& trunc, const ChainDemoConfig& config) {
  if (config.initial_levels.empty()) return vacuum(trunc);
  return fock_state(trunc, config.initial_levels);
}

/// Compiles the targets on the truncated chain, starting from the Fock state
/// in config.initial_levels.
inline ReachabilityReport chain_demo(const ChainSpec& spec, const std::vector<ReachTarget>& targets,
                                     const ChainDemoConfig& config = {}) {
  const GeneratorSet gens = chain_generators(spec, config);
  const StateVector psi0 = chain_initial_state(*gens.truncation(), config);
  return reachability_report(gens, psi0, targets, config.reach);
}

}  // namespace recurctl
