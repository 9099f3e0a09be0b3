#pragma once

// Piecewise-constant forward evolution and the Trotter / group-commutator
// product formulas.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "recurctl/fock.hpp"
#include "recurctl/spectrum.hpp"
#include "recurctl/weyl.hpp"

namespace recurctl {

/// One switching interval: evolve under generator `generator` for `duration`.
/// `reversed` marks an exact inverse e^{-H t}; such segments only come from
/// the oracle inverter and make a sequence unphysical.
struct Segment {
  std::size_t generator = 0;
  double duration = 0.0;
  bool reversed = false;

  bool operator==(const Segment&) const = default;
};

class ControlSequence {
 public:
  ControlSequence() = default;
  explicit ControlSequence(std::vector<Segment> segments, std::string provenance = {})
      : provenance_(std::move(provenance)) {
    segments_.reserve(segments.size());
    for (const auto& s : segments) append(s);
  }

  void append(const Segment& s) {
    if (!(s.duration >= 0.0) || !std::isfinite(s.duration)) {
      throw std::invalid_argument("ControlSequence: duration must be finite and >= 0, got " +
                                  std::to_string(s.duration));
    }
    segments_.push_back(s);
  }

  void append(const ControlSequence& other) {
    segments_.insert(segments_.end(), other.segments_.begin(), other.segments_.end());
  }

  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t size() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }

  bool physical() const {
    for (const auto& s : segments_) {
      if (s.reversed) return false;
    }
    return true;
  }

  std::size_t max_generator() const {
    std::size_t out = 0;
    for (const auto& s : segments_) out = std::max(out, s.generator);
    return out;
  }

  double total_time() const {
    double t = 0.0;
    for (const auto& s : segments_) t += s.duration;
    return t;
  }

  bool operator==(const ControlSequence& o) const { return segments_ == o.segments_; }

 private:
  std::vector<Segment> segments_;
  std::string provenance_;
};

inline constexpr double kSkewTolerance = 1e-8;

/// e^{H t} for skew-hermitian H via the eigen-decomposition of iH.
inline Matrix expm_skew(const Matrix& generator, double t) {
  if (t < 0.0) throw std::invalid_argument("expm_skew: duration must be >= 0");
  const double defect = max_abs_entry(generator + generator.adjoint());
  if (defect > kSkewTolerance) {
    throw std::invalid_argument("expm_skew: generator not skew-hermitian (defect " + std::to_string(defect) + ")");
  }
  const SpectralData sd = spectral(Matrix(Complex{0.0, 1.0} * generator));
  const RealVector e = sd.physical_eigenvalues();
  Vector phases(e.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) phases(i) = std::polar(1.0, -e(i) * t);
  return sd.eigenvectors * phases.asDiagonal() * sd.eigenvectors.adjoint();
}

inline Matrix expm_skew(const TruncatedRep& generator, double t) { return expm_skew(generator.matrix, t); }

/// A directly implementable Hamiltonian H~ with its spectral data. The
/// generator is H = -i H~.
struct Generator {
  Matrix hamiltonian;
  SpectralData spectrum;
  std::optional<PolyOp> source;  // skew-hermitian H, when built symbolically
  std::string label;
};

class GeneratorSet {
 public:
  GeneratorSet() = default;

  /// From skew-hermitian generators H_k (hermitian-role inputs are taken
  /// as Hamiltonians H~_k and converted).
  GeneratorSet(const std::vector<PolyOp>& generators, const TruncationSpec& spec) : spec_(spec) {
    for (const auto& g : generators) add(g);
  }

  void add(const PolyOp& op, std::string label = {}) {
    if (!spec_) throw std::logic_error("GeneratorSet: no truncation for symbolic generators");
    PolyOp skew = op.role() == Role::hermitian ? to_skew(op) : op;
    if (!is_skew_hermitian(skew, 1e-9)) {
      throw std::invalid_argument("GeneratorSet: generator is neither hermitian nor skew-hermitian: " +
                                  to_string(op));
    }
    skew = skew.with_role(Role::skew_hermitian);
    const TruncatedRep hrep = represent(to_hermitian(skew), *spec_);
    Generator g{hrep.matrix, spectral(hrep.matrix), skew, label.empty() ? to_string(to_hermitian(skew)) : label};
    generators_.push_back(std::move(g));
  }

  void add_hamiltonian_matrix(const Matrix& hamiltonian, std::string label = {}) {
    if (!generators_.empty() && generators_.front().hamiltonian.rows() != hamiltonian.rows()) {
      throw std::invalid_argument("GeneratorSet: dimension mismatch");
    }
    generators_.push_back(Generator{hamiltonian, spectral(hamiltonian), std::nullopt, std::move(label)});
  }

  std::size_t size() const { return generators_.size(); }
  Eigen::Index dimension() const { return generators_.empty() ? 0 : generators_.front().hamiltonian.rows(); }
  const Generator& at(std::size_t k) const {
    if (k >= generators_.size()) {
      throw std::out_of_range("GeneratorSet: generator index " + std::to_string(k) + " unresolved");
    }
    return generators_[k];
  }
  const std::optional<TruncationSpec>& truncation() const { return spec_; }

  bool symbolic() const {
    for (const auto& g : generators_) {
      if (!g.source) return false;
    }
    return !generators_.empty();
  }

  /// Skew-hermitian matrix H_k = -i H~_k.
  Matrix generator_matrix(std::size_t k) const { return Complex{0.0, -1.0} * at(k).hamiltonian; }

  /// e^{H_k t} psi for any real t (negative t is the exact inverse).
  StateVector apply(std::size_t k, double t, const StateVector& psi) const {
    const Generator& g = at(k);
    const RealVector& e = g.spectrum.eigenvalues;
    const double shift = g.spectrum.shift;
    Vector c = g.spectrum.eigenvectors.adjoint() * psi;
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) *= std::polar(1.0, -(e(i) - shift) * t);
    return g.spectrum.eigenvectors * c;
  }

  StateVector apply(const Segment& s, const StateVector& psi) const {
    return apply(s.generator, s.reversed ? -s.duration : s.duration, psi);
  }

 private:
  std::optional<TruncationSpec> spec_;
  std::vector<Generator> generators_;
};

inline constexpr double kIsometryTolerance = 1e-10;

/// prod_j e^{H_{k_j} t_j} psi0 applied in time order.
inline StateVector evolve(const ControlSequence& seq, const StateVector& psi0, const GeneratorSet& generators) {
  if (psi0.size() != generators.dimension()) throw std::invalid_argument("evolve: state dimension mismatch");
  StateVector psi = psi0;
  for (const auto& s : seq.segments()) psi = generators.apply(s, psi);
  const double drift = std::abs(psi.norm() - psi0.norm());
  if (drift > kIsometryTolerance * std::max<double>(1.0, static_cast<double>(seq.size()) / 1000.0)) {
    throw std::logic_error("evolve: norm drift " + std::to_string(drift));
  }
  return psi;
}

/// Supplies forward surrogates for e^{-H_k s}. `state` is the state the
/// surrogate will act on, when known.
class Inverter {
 public:
  virtual ~Inverter() = default;
  virtual Segment invert(std::size_t generator, double duration, const StateVector* state) = 0;
  /// True if invert needs the state it will act on.
  virtual bool needs_state() const { return false; }
  virtual bool physical() const = 0;
};

/// Oracle-only: emits a reversed segment, i.e. the exact matrix inverse.
class ExactInverter final : public Inverter {
 public:
  Segment invert(std::size_t generator, double duration, const StateVector*) override {
    return Segment{generator, duration, true};
  }
  bool physical() const override { return false; }
};

/// A requested evolution e^{H_k tau}, where tau < 0 still needs inverting.
struct Intent {
  std::size_t generator = 0;
  double duration = 0.0;
};

using Word = std::vector<Intent>;

/// The inverse word: reversed order, negated durations.
inline Word inverse_word(const Word& w) {
  Word out(w.rbegin(), w.rend());
  for (auto& i : out) i.duration = -i.duration;
  return out;
}

inline Word repeat_word(const Word& w, std::size_t times) {
  Word out;
  out.reserve(w.size() * times);
  for (std::size_t r = 0; r < times; ++r) out.insert(out.end(), w.begin(), w.end());
  return out;
}

/// Tracks the evolving state while a word is realized, for inverters that
/// certify against the actual state they act on.
struct Cursor {
  const GeneratorSet* generators = nullptr;
  StateVector state;
};

/// Turns intents into physical segments; negative durations go through the inverter.
inline ControlSequence realize(const Word& word, Inverter& inverter, Cursor* cursor = nullptr,
                               std::string provenance = {}) {
  if (inverter.needs_state() && cursor == nullptr) {
    for (const auto& i : word) {
      if (i.duration < 0.0) throw std::invalid_argument("realize: inverter needs the running state");
    }
  }
  ControlSequence out({}, std::move(provenance));
  for (const auto& i : word) {
    Segment s;
    if (i.duration >= 0.0) {
      s = Segment{i.generator, i.duration, false};
    } else {
      s = inverter.invert(i.generator, -i.duration, cursor ? &cursor->state : nullptr);
    }
    out.append(s);
    if (cursor) cursor->state = cursor->generators->apply(s, cursor->state);
  }
  return out;
}

/// (e^{H_k t/n} e^{H_l t/n})^n as 2n forward segments, k first in time.
inline ControlSequence trotter_sequence(std::size_t k, std::size_t l, double t, std::size_t n) {
  if (n < 1) throw std::invalid_argument("trotter_sequence: n must be >= 1");
  if (t < 0.0) throw std::invalid_argument("trotter_sequence: t must be >= 0");
  const double step = t / static_cast<double>(n);
  std::vector<Segment> segs;
  segs.reserve(2 * n);
  for (std::size_t r = 0; r < n; ++r) {
    segs.push_back({k, step, false});
    segs.push_back({l, step, false});
  }
  return ControlSequence(std::move(segs), "trotter(k=" + std::to_string(k + 1) + ", l=" + std::to_string(l + 1) +
                                              ", t=" + std::to_string(t) + ", n=" + std::to_string(n) + ")");
}

/// One group-commutator word in time order: H_l, H_k, then the inverses
/// of H_l and H_k. As an operator product this is
/// e^{-H_k s} e^{-H_l s} e^{H_k s} e^{H_l s} -> e^{[H_k, H_l] s^2}.
inline Word commutator_word(std::size_t k, std::size_t l, double step) {
  return Word{{l, step}, {k, step}, {l, -step}, {k, -step}};
}

/// The n^2-fold group-commutator word at step t/n, 4 n^2 segments, with
/// every negative segment replaced by the inverter's surrogate.
inline ControlSequence commutator_sequence(std::size_t k, std::size_t l, double t, std::size_t n,
                                           Inverter& inverter, Cursor* cursor = nullptr) {
  if (n < 1) throw std::invalid_argument("commutator_sequence: n must be >= 1");
  if (t < 0.0) throw std::invalid_argument("commutator_sequence: t must be >= 0");
  const Word word = repeat_word(commutator_word(k, l, t / static_cast<double>(n)), n * n);
  return realize(word, inverter, cursor,
                 "commutator(k=" + std::to_string(k + 1) + ", l=" + std::to_string(l + 1) +
                     ", t=" + std::to_string(t) + ", n=" + std::to_string(n) + ")");
}

}  // namespace recurctl
