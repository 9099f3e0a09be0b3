#pragma once

// Real Lie algebras generated by skew-hermitian polynomial operators.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "recurctl/weyl.hpp"

namespace recurctl {

/// Real inner product of the monomial-coordinate vectors (real and
/// imaginary parts as separate coordinates).
inline double real_inner(const PolyOp& a, const PolyOp& b) {
  const PolyOp& small = a.size() <= b.size() ? a : b;
  const PolyOp& large = a.size() <= b.size() ? b : a;
  double out = 0.0;
  for (const auto& [m, c] : small.terms()) {
    const Complex d = large.coefficient(m);
    out += c.real() * d.real() + c.imag() * d.imag();
  }
  return out;
}

inline double real_norm(const PolyOp& a) { return std::sqrt(real_inner(a, a)); }

/// Orthonormal frame over the reals, grown one direction at a time with
/// twice-iterated Gram-Schmidt. A candidate is independent when its residual
/// exceeds rel_tol times its own norm.
class RealFrame {
 public:
  explicit RealFrame(double rel_tol = 1e-10) : rel_tol_(rel_tol) {}

  std::size_t size() const { return vectors_.size(); }
  const std::vector<PolyOp>& vectors() const { return vectors_; }

  PolyOp residual(const PolyOp& x) const {
    PolyOp r = x.with_role(Role::general);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& e : vectors_) {
        const double c = real_inner(e, r);
        if (c != 0.0) r -= e * c;
      }
    }
    return r;
  }

  /// Relative residual ||x - P x|| / ||x||; zero for x = 0.
  double relative_residual(const PolyOp& x) const {
    const double nx = real_norm(x);
    if (nx == 0.0) return 0.0;
    return real_norm(residual(x)) / nx;
  }

  /// Adds x if it is independent of the frame; returns whether it was added.
  bool try_add(const PolyOp& x) {
    const double nx = real_norm(x);
    if (nx == 0.0) return false;
    PolyOp r = residual(x);
    const double nr = real_norm(r);
    if (nr <= rel_tol_ * nx) return false;
    vectors_.push_back((r * (1.0 / nr)).pruned(1e-15 * nx / nr));
    return true;
  }

 private:
  double rel_tol_;
  std::vector<PolyOp> vectors_;
};

class LieBasis {
 public:
  std::vector<PolyOp> generators;
  std::vector<PolyOp> basis;
  unsigned degree_cap = 6;
  std::size_t dim_cap = 512;
  bool saturated = false;
  bool degree_cap_hit = false;
  bool dim_cap_hit = false;
  RealFrame frame;

  std::size_t dimension() const { return basis.size(); }
  std::size_t mode_count() const {
    return basis.empty() ? (generators.empty() ? 1 : generators.front().mode_count())
                         : basis.front().mode_count();
  }
};

struct ClosureCaps {
  unsigned degree_cap = 6;
  std::size_t dim_cap = 512;
  double rel_tol = 1e-10;
};

namespace detail {

inline void require_skew_generators(std::span<const PolyOp> generators) {
  if (generators.empty()) throw std::invalid_argument("lie_closure: empty generator list");
  const std::size_t modes = generators.front().mode_count();
  for (const auto& g : generators) {
    if (g.mode_count() != modes) throw std::invalid_argument("lie_closure: mode_count mismatch");
    if (!is_skew_hermitian(g, 1e-9)) {
      throw std::invalid_argument("lie_closure: generator is not skew-hermitian: " + to_string(g));
    }
  }
}

}  // namespace detail

/// Breadth-first bracket saturation. Brackets whose degree exceeds the cap
/// are discarded and mark the result unsaturated; reaching dim_cap stops
/// the search with a partial basis.
inline LieBasis lie_closure(std::span<const PolyOp> generators, const ClosureCaps& caps = {}) {
  if (caps.degree_cap < 1 || caps.dim_cap < 1) {
    throw std::invalid_argument("lie_closure: caps must be >= 1");
  }
  detail::require_skew_generators(generators);

  LieBasis out;
  out.generators.assign(generators.begin(), generators.end());
  out.degree_cap = caps.degree_cap;
  out.dim_cap = caps.dim_cap;
  out.frame = RealFrame(caps.rel_tol);

  auto offer = [&](PolyOp x) {
    if (x.is_zero()) return true;
    if (x.degree() > caps.degree_cap) {
      out.degree_cap_hit = true;
      return true;
    }
    if (out.basis.size() >= caps.dim_cap) {
      if (out.frame.relative_residual(x) > caps.rel_tol) {
        out.dim_cap_hit = true;
        return false;
      }
      return true;
    }
    if (out.frame.try_add(x)) out.basis.push_back(x.with_role(Role::skew_hermitian));
    return true;
  };

  for (const auto& g : generators) {
    if (!offer(g)) break;
  }
  for (std::size_t j = 0; j < out.basis.size() && !out.dim_cap_hit; ++j) {
    for (std::size_t i = 0; i < j && !out.dim_cap_hit; ++i) {
      if (!offer(bracket(out.basis[i], out.basis[j]))) break;
    }
  }
  out.saturated = !out.degree_cap_hit && !out.dim_cap_hit;
  return out;
}

inline LieBasis lie_closure(std::initializer_list<PolyOp> generators, const ClosureCaps& caps = {}) {
  std::vector<PolyOp> g(generators);
  return lie_closure(std::span<const PolyOp>(g), caps);
}

/// True iff x lies in the real span of the basis within relative residual tol.
inline bool contains(const LieBasis& basis, const PolyOp& x, double tol = 1e-9) {
  if (!basis.basis.empty() && x.mode_count() != basis.mode_count()) {
    throw std::invalid_argument("contains: mode_count mismatch");
  }
  return basis.frame.relative_residual(x) <= tol;
}

/// {i (M + M^dagger)/2 : M a monomial on the given modes, degree <= cap}.
/// Spans the skew-hermitian polynomials of degree <= cap on those modes.
inline std::vector<PolyOp> polynomial_generators(std::span<const std::size_t> modes,
                                                 std::size_t mode_count, unsigned cap) {
  std::vector<Monomial> monomials{Monomial(mode_count)};
  for (std::size_t mode : modes) {
    if (mode >= mode_count) throw std::out_of_range("polynomial_generators: mode out of range");
    std::vector<Monomial> next;
    for (const auto& m : monomials) {
      const unsigned used = m.degree();
      for (unsigned a = 0; a + used <= cap; ++a) {
        for (unsigned b = 0; a + b + used <= cap; ++b) {
          Monomial n = m;
          n.set(mode, a, b);
          next.push_back(std::move(n));
        }
      }
    }
    monomials = std::move(next);
  }
  std::vector<PolyOp> out;
  out.reserve(monomials.size());
  for (const auto& m : monomials) out.push_back(symmetrized_generator(m));
  return out;
}

inline std::vector<PolyOp> single_mode_generators(std::size_t mode, std::size_t mode_count,
                                                  unsigned cap) {
  const std::size_t modes[] = {mode};
  return polynomial_generators(modes, mode_count, cap);
}

enum class Verdict { propagates, fails, unknown };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::propagates: return "propagates";
    case Verdict::fails: return "fails";
    case Verdict::unknown: return "unknown";
  }
  return "unknown";
}

struct PropagationResult {
  Verdict verdict = Verdict::unknown;
  LieBasis closure;
  std::vector<std::size_t> target_modes;
  std::size_t targets_checked = 0;
  std::size_t targets_missing = 0;
  std::string reason;
};

/// Tests <l_i, [l_i, i H_ij]> = l_ij with degree-capped generating sets.
/// "propagates" is only reported when every capped two-mode generator is in
/// the computed closure, which is always a subset of the true algebra.
/// "fails" requires either a saturated closure or that no generator touches
/// the partner mode at all; anything else is "unknown".
inline PropagationResult algebraic_propagation_check(const LieBasis& local, const PolyOp& coupling,
                                                     const ClosureCaps& caps = {}) {
  if (local.basis.empty()) throw std::invalid_argument("algebraic_propagation_check: empty local basis");
  const std::size_t modes = local.mode_count();
  if (coupling.mode_count() != modes) {
    throw std::invalid_argument("algebraic_propagation_check: mode_count mismatch");
  }

  std::vector<std::size_t> local_modes;
  for (std::size_t m = 0; m < modes; ++m) {
    for (const auto& x : local.basis) {
      if (x.touches(m)) {
        local_modes.push_back(m);
        break;
      }
    }
  }

  PropagationResult out;
  const PolyOp coupling_generator = (coupling * kI).with_role(Role::skew_hermitian);
  std::vector<PolyOp> generators = local.basis;
  for (const auto& x : local.basis) {
    PolyOp b = bracket(x, coupling_generator);
    if (!b.is_zero()) generators.push_back(b);
  }

  std::vector<std::size_t> partner_modes;
  for (std::size_t m = 0; m < modes; ++m) {
    const bool is_local = std::find(local_modes.begin(), local_modes.end(), m) != local_modes.end();
    if (is_local) continue;
    for (const auto& g : generators) {
      if (g.touches(m)) {
        partner_modes.push_back(m);
        break;
      }
    }
  }

  out.closure = lie_closure(std::span<const PolyOp>(generators), caps);
  if (partner_modes.empty()) {
    out.verdict = Verdict::fails;
    out.target_modes = local_modes;
    out.reason = "no generator acts outside the local modes; every bracket stays local";
    return out;
  }

  out.target_modes = local_modes;
  out.target_modes.insert(out.target_modes.end(), partner_modes.begin(), partner_modes.end());
  std::sort(out.target_modes.begin(), out.target_modes.end());
  const auto targets = polynomial_generators(out.target_modes, modes, caps.degree_cap);
  out.targets_checked = targets.size();
  for (const auto& t : targets) {
    if (!contains(out.closure, t, 1e-8)) ++out.targets_missing;
  }

  if (out.targets_missing == 0) {
    out.verdict = Verdict::propagates;
    out.reason = "closure contains every capped generator of the joint algebra";
  } else if (out.closure.saturated) {
    out.verdict = Verdict::fails;
    out.reason = "saturated closure misses " + std::to_string(out.targets_missing) + " generators";
  } else {
    out.verdict = Verdict::unknown;
    out.reason = "caps bound before the closure reached " + std::to_string(out.targets_missing) +
                 " generators";
  }
  return out;
}

}  // namespace recurctl
