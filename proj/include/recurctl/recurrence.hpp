#pragma once

// Recurrence machinery: spectral tail cuts, a search for times at which every
// retained phase e^{-i E_n T} returns close to 1, and forward-time
// surrogates for backward evolution built from those times.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <future>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "recurctl/fock.hpp"
#include "recurctl/propagator.hpp"
#include "recurctl/spectrum.hpp"

namespace recurctl {

namespace detail {

inline std::string short_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace detail

/// c_n = <phi_n, psi> in the eigenbasis of a SpectralData.
using OverlapVector = Vector;

inline constexpr double kOverlapNormTolerance = 1e-10;

inline OverlapVector overlaps(const SpectralData& sd, const StateVector& psi) {
  if (psi.size() != sd.eigenvectors.rows()) throw std::invalid_argument("overlaps: dimension mismatch");
  OverlapVector c = sd.eigenvectors.adjoint() * psi;
  const double mass = c.squaredNorm();
  if (std::abs(mass - 1.0) > kOverlapNormTolerance) {
    throw std::invalid_argument("overlaps: state is not normalized (sum |c_n|^2 = " + std::to_string(mass) + ")");
  }
  return c;
}

/// sum_n 2 (1 - cos(E_n T)) |c_n|^2 written with 1 - cos x = 2 sin^2(x/2).
inline double recurrence_distance(const OverlapVector& c, const RealVector& energies, double t) {
  if (c.size() != energies.size()) throw std::invalid_argument("recurrence_distance: length mismatch");
  double acc = 0.0;
  for (Eigen::Index n = 0; n < c.size(); ++n) {
    const double s = std::sin(0.5 * energies(n) * t);
    acc += std::norm(c(n)) * s * s;
  }
  return std::sqrt(4.0 * acc);
}

/// sum_{n > N} |c_n|^2.
inline double tail_mass(const OverlapVector& c, std::size_t cut) {
  double acc = 0.0;
  for (Eigen::Index n = c.size() - 1; n > static_cast<Eigen::Index>(cut); --n) acc += std::norm(c(n));
  return acc;
}

/// Smallest N with sum_{n > N} |c_n|^2 < delta^2 / 8.
inline std::size_t tail_cut(const OverlapVector& c, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("tail_cut: delta must be > 0");
  const double threshold = delta * delta / 8.0;
  if (c.size() == 0) return 0;
  // suffix[n] = sum_{m >= n} |c_m|^2, accumulated from the top for accuracy.
  std::vector<double> suffix(static_cast<std::size_t>(c.size()) + 1, 0.0);
  for (Eigen::Index n = c.size(); n-- > 0;) {
    suffix[static_cast<std::size_t>(n)] = suffix[static_cast<std::size_t>(n) + 1] + std::norm(c(n));
  }
  for (std::size_t cut = 0; cut < static_cast<std::size_t>(c.size()); ++cut) {
    if (suffix[cut + 1] < threshold) return cut;
  }
  return static_cast<std::size_t>(c.size()) - 1;
}

/// max_i tail_cut(c_i, delta) over the points of a finite net.
inline std::size_t tail_cut_finite_net(const std::vector<OverlapVector>& net, double delta) {
  if (net.empty()) throw std::invalid_argument("tail_cut_finite_net: empty net");
  std::size_t out = 0;
  for (const auto& c : net) out = std::max(out, tail_cut(c, delta));
  return out;
}

class SpectrumExhausted : public std::runtime_error {
 public:
  SpectrumExhausted(double threshold, double largest)
      : std::runtime_error("tail_cut_energy: spectrum exhausted, need E_{N+1} >= " + detail::short_number(threshold) +
                           " but largest eigenvalue is " + detail::short_number(largest)),
        threshold_(threshold),
        largest_(largest) {}
  double threshold() const { return threshold_; }
  double largest() const { return largest_; }

 private:
  double threshold_;
  double largest_;
};

/// Smallest N with E_{N+1} >= 8 M / delta^2. `energies` must be the shifted,
/// ascending spectrum (E_0 >= 0). Any state with <H~> < M then has
/// sum_{n > N} |c_n|^2 < M / E_{N+1} <= delta^2 / 8.
inline std::size_t tail_cut_energy(const RealVector& energies, double bound, double delta) {
  if (!(bound > 0.0) || !(delta > 0.0)) throw std::invalid_argument("tail_cut_energy: M and delta must be > 0");
  if (energies.size() == 0) throw std::invalid_argument("tail_cut_energy: empty spectrum");
  if (energies(0) < 0.0) throw std::invalid_argument("tail_cut_energy: spectrum must be shifted so E_0 >= 0");
  const double threshold = 8.0 * bound / (delta * delta);
  for (Eigen::Index m = 1; m < energies.size(); ++m) {
    if (energies(m) < energies(m - 1)) throw std::invalid_argument("tail_cut_energy: spectrum not ascending");
    if (energies(m) >= threshold) return static_cast<std::size_t>(m - 1);
  }
  throw SpectrumExhausted(threshold, energies(energies.size() - 1));
}

// ---------------------------------------------------------------------------
// Recurrence-time search

/// sum_n (1 - cos(E_n T)).
inline double recurrence_objective(std::span<const double> energies, double t) {
  double acc = 0.0;
  for (double e : energies) {
    const double s = std::sin(0.5 * e * t);
    acc += 2.0 * s * s;
  }
  return acc;
}

struct RecurrenceSearch {
  double tau_min = 0.0;
  std::optional<double> horizon;    // T_max; default 1e6 / smallest eigenvalue gap
  std::optional<double> grid_step;  // default 2 pi / (100 max|E_n|)
  std::size_t max_grid_points = 50'000'000;
  std::size_t block_points = 1'000'000;
  unsigned jobs = 1;
  std::size_t trace_stride = 0;  // 0 disables the scan trace
};

struct ScanSample {
  double time;
  double objective;
};

struct RecurrenceTime {
  double time = 0.0;
  double objective = 0.0;
  double threshold = 0.0;
  std::size_t grid_points = 0;
};

class RecurrenceNotFound : public std::runtime_error {
 public:
  RecurrenceNotFound(double best_time, double best_objective, double threshold, double horizon)
      : std::runtime_error("find_recurrence_time: no T in [tau_min, " + detail::short_number(horizon) +
                           "] with objective < " + detail::short_number(threshold) + "; best objective " +
                           detail::short_number(best_objective) + " at T = " + detail::short_number(best_time)),
        best_time_(best_time),
        best_objective_(best_objective),
        horizon_(horizon) {}
  double best_time() const { return best_time_; }
  double best_objective() const { return best_objective_; }
  double horizon() const { return horizon_; }

 private:
  double best_time_;
  double best_objective_;
  double horizon_;
};

inline double default_grid_step(std::span<const double> energies) {
  double emax = 0.0;
  for (double e : energies) emax = std::max(emax, std::abs(e));
  return emax > 0.0 ? 2.0 * std::numbers::pi / (100.0 * emax) : 1.0;
}

inline double default_horizon(std::span<const double> energies) {
  std::vector<double> sorted(energies.begin(), energies.end());
  std::sort(sorted.begin(), sorted.end());
  double scale = 0.0;
  for (double e : sorted) scale = std::max(scale, std::abs(e));
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const double d = sorted[i] - sorted[i - 1];
    if (d > 1e-12 * std::max(1.0, scale)) gap = std::min(gap, d);
  }
  if (!std::isfinite(gap)) gap = scale > 0.0 ? scale : 1.0;
  return 1e6 / gap;
}

namespace detail {

struct ObjectiveDerivatives {
  double value;
  double first;
  double second;
};

inline ObjectiveDerivatives objective_derivatives(std::span<const double> energies, double t) {
  ObjectiveDerivatives d{0.0, 0.0, 0.0};
  for (double e : energies) {
    const double s = std::sin(0.5 * e * t);
    d.value += 2.0 * s * s;
    d.first += e * std::sin(e * t);
    d.second += e * e * std::cos(e * t);
  }
  return d;
}

// Golden-section minimization on [lo, hi] followed by a few guarded Newton steps.
inline std::pair<double, double> refine_minimum(std::span<const double> energies, double lo, double hi) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = recurrence_objective(energies, x1), f2 = recurrence_objective(energies, x2);
  for (int it = 0; it < 80 && (b - a) > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = recurrence_objective(energies, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = recurrence_objective(energies, x2);
    }
  }
  double t = f1 <= f2 ? x1 : x2;
  double f = std::min(f1, f2);
  for (double edge : {lo, hi}) {
    const double fe = recurrence_objective(energies, edge);
    if (fe < f) {
      f = fe;
      t = edge;
    }
  }
  for (int it = 0; it < 8; ++it) {
    const auto d = objective_derivatives(energies, t);
    if (!(d.second > 0.0)) break;
    const double next = std::clamp(t - d.first / d.second, lo, hi);
    const double fn = recurrence_objective(energies, next);
    if (!(fn < f)) break;
    t = next;
    f = fn;
  }
  return {t, f};
}

struct BlockResult {
  std::optional<RecurrenceTime> found;
  double best_time = 0.0;
  double best_objective = std::numeric_limits<double>::infinity();
  std::vector<ScanSample> trace;
};

// Scans grid indices [first, last] of T_i = tau_min + i h (clipped to the horizon).
inline BlockResult scan_block(std::span<const double> energies, double tau_min, double horizon, double h,
                              std::size_t first, std::size_t last, double threshold, double slack,
                              std::size_t trace_stride) {
  BlockResult out;
  auto time_at = [&](std::size_t i) { return std::min(tau_min + static_cast<double>(i) * h, horizon); };
  auto value_at = [&](std::size_t i) { return recurrence_objective(energies, time_at(i)); };

  double prev = first > 0 ? value_at(first - 1) : std::numeric_limits<double>::infinity();
  double cur = value_at(first);
  for (std::size_t i = first; i <= last; ++i) {
    const double next = value_at(i + 1);
    const double t = time_at(i);
    if (trace_stride && i % trace_stride == 0) out.trace.push_back({t, cur});
    if (cur < out.best_objective) {
      out.best_objective = cur;
      out.best_time = t;
    }
    const bool local_min = cur <= prev && cur <= next;
    if (cur < threshold || (local_min && cur - slack < threshold)) {
      const double lo = std::max(tau_min, t - h);
      const double hi = std::min(horizon, t + h);
      const auto [tr, fr] = refine_minimum(energies, lo, hi);
      if (fr < out.best_objective) {
        out.best_objective = fr;
        out.best_time = tr;
      }
      if (fr < threshold) {
        out.found = RecurrenceTime{tr, fr, threshold, i - first + 1};
        return out;
      }
    }
    prev = cur;
    cur = next;
  }
  return out;
}

}  // namespace detail

/// Smallest grid time T in [tau_min, T_max] with
/// sum_n (1 - cos(E_n T)) < delta^2 / 4, refined by local minimization.
/// Depends only on the eigenvalues. Throws RecurrenceNotFound with the best
/// objective seen when the horizon is exhausted.
inline RecurrenceTime find_recurrence_time(std::span<const double> energies, double delta,
                                           const RecurrenceSearch& search = {},
                                           std::vector<ScanSample>* trace = nullptr) {
  if (!(delta > 0.0)) throw std::invalid_argument("find_recurrence_time: delta must be > 0");
  if (search.tau_min < 0.0) throw std::invalid_argument("find_recurrence_time: tau_min must be >= 0");
  const double threshold = delta * delta / 4.0;
  const double h = search.grid_step.value_or(default_grid_step(energies));
  if (!(h > 0.0)) throw std::invalid_argument("find_recurrence_time: grid step must be > 0");
  double horizon = search.horizon.value_or(search.tau_min + default_horizon(energies));
  if (!(horizon >= search.tau_min)) throw std::invalid_argument("find_recurrence_time: horizon below tau_min");

  double emax_sq = 0.0;
  for (double e : energies) emax_sq += e * e;
  if (emax_sq == 0.0) return RecurrenceTime{search.tau_min, 0.0, threshold, 1};

  std::size_t points = static_cast<std::size_t>(std::floor((horizon - search.tau_min) / h)) + 1;
  if (points > search.max_grid_points) {
    points = search.max_grid_points;
    horizon = search.tau_min + static_cast<double>(points - 1) * h;
  }
  // A sampled local minimum f_i can sit at most sum E_n^2 h^2 / 2 above the true minimum.
  const double slack = 0.5 * emax_sq * h * h;
  const std::size_t block = std::max<std::size_t>(1, search.block_points);
  const unsigned jobs = std::max(1u, search.jobs);

  double best_time = search.tau_min;
  double best_objective = std::numeric_limits<double>::infinity();
  std::size_t scanned = 0;
  for (std::size_t start = 0; start < points;) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (unsigned j = 0; j < jobs && start < points; ++j) {
      const std::size_t last = std::min(points - 1, start + block - 1);
      ranges.emplace_back(start, last);
      start = last + 1;
    }
    std::vector<detail::BlockResult> results(ranges.size());
    if (ranges.size() == 1) {
      results[0] = detail::scan_block(energies, search.tau_min, horizon, h, ranges[0].first, ranges[0].second,
                                      threshold, slack, search.trace_stride);
    } else {
      std::vector<std::future<detail::BlockResult>> futures;
      for (const auto& [a, b] : ranges) {
        futures.push_back(std::async(std::launch::async, [&, a = a, b = b] {
          return detail::scan_block(energies, search.tau_min, horizon, h, a, b, threshold, slack,
                                    search.trace_stride);
        }));
      }
      for (std::size_t r = 0; r < futures.size(); ++r) results[r] = futures[r].get();
    }
    for (std::size_t r = 0; r < results.size(); ++r) {
      auto& res = results[r];
      if (trace) trace->insert(trace->end(), res.trace.begin(), res.trace.end());
      if (res.best_objective < best_objective) {
        best_objective = res.best_objective;
        best_time = res.best_time;
      }
      if (res.found) {
        RecurrenceTime out = *res.found;
        out.grid_points += scanned;
        return out;
      }
      scanned += ranges[r].second - ranges[r].first + 1;
    }
  }
  throw RecurrenceNotFound(best_time, best_objective, threshold, horizon);
}

inline RecurrenceTime find_recurrence_time(const RealVector& energies, std::size_t cut, double delta,
                                           const RecurrenceSearch& search = {},
                                           std::vector<ScanSample>* trace = nullptr) {
  const auto count = std::min<std::size_t>(cut + 1, static_cast<std::size_t>(energies.size()));
  return find_recurrence_time(std::span<const double>(energies.data(), count), delta, search, trace);
}

// ---------------------------------------------------------------------------
// Plans and inversion

enum class PlanMode { pointwise, finite_net, energy_bound };

inline const char* to_string(PlanMode m) {
  switch (m) {
    case PlanMode::pointwise: return "pointwise";
    case PlanMode::finite_net: return "finite_net";
    case PlanMode::energy_bound: return "energy_bound";
  }
  return "pointwise";
}

/// What to do when 8M/delta^2 exceeds the largest truncated eigenvalue.
/// `finite_model` treats the truncated spectrum as the whole system, so the
/// tail beyond the last level is empty; the plan records that it was used.
enum class ExhaustionPolicy { fail, finite_model };

struct PointwiseTail {
  StateVector state;
};
struct FiniteNetTail {
  std::vector<StateVector> net;
};
struct EnergyTail {
  double bound = 0.0;
  ExhaustionPolicy policy = ExhaustionPolicy::fail;
};
using TailSource = std::variant<PointwiseTail, FiniteNetTail, EnergyTail>;

inline PlanMode mode_of(const TailSource& src) {
  return std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointwiseTail>) return PlanMode::pointwise;
        else if constexpr (std::is_same_v<T, FiniteNetTail>) return PlanMode::finite_net;
        else return PlanMode::energy_bound;
      },
      src);
}

struct RecurrencePlan {
  double delta = 0.0;
  std::size_t cut = 0;  // N
  double recurrence_time = 0.0;
  double achieved_sum = 0.0;
  double tail_mass = 0.0;
  PlanMode mode = PlanMode::pointwise;
  std::optional<double> energy_bound;
  bool spectrum_exhausted = false;
  double tau_min = 0.0;
  double shift = 0.0;
  std::string spectrum_hash;

  /// 2 sum_{n<=N} (1 - cos E_n T) + 4 tail_mass, which must stay below delta^2.
  double decomposition() const { return 2.0 * achieved_sum + 4.0 * tail_mass; }

  /// In energy_bound mode tail_mass is the supremum M / E_{N+1}; states with
  /// <H~> < M stay strictly below it, so equality with delta^2 / 8 is allowed.
  bool certified() const {
    const double cap = delta * delta / 8.0;
    const bool tail_ok = mode == PlanMode::energy_bound ? tail_mass <= cap : tail_mass < cap;
    return achieved_sum < delta * delta / 4.0 && tail_ok && decomposition() < delta * delta;
  }
};

struct TailCutResult {
  std::size_t cut = 0;
  double tail_mass = 0.0;
  bool exhausted = false;
};

inline TailCutResult compute_tail_cut(const SpectralData& sd, const TailSource& src, double delta) {
  return std::visit(
      [&](const auto& s) -> TailCutResult {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointwiseTail>) {
          const OverlapVector c = overlaps(sd, s.state);
          const std::size_t cut = tail_cut(c, delta);
          return {cut, tail_mass(c, cut), false};
        } else if constexpr (std::is_same_v<T, FiniteNetTail>) {
          std::vector<OverlapVector> cs;
          for (const auto& psi : s.net) cs.push_back(overlaps(sd, psi));
          const std::size_t cut = tail_cut_finite_net(cs, delta);
          double worst = 0.0;
          for (const auto& c : cs) worst = std::max(worst, tail_mass(c, cut));
          return {cut, worst, false};
        } else {
          try {
            const std::size_t cut = tail_cut_energy(sd.eigenvalues, s.bound, delta);
            return {cut, s.bound / sd.eigenvalues(static_cast<Eigen::Index>(cut) + 1), false};
          } catch (const SpectrumExhausted&) {
            if (s.policy == ExhaustionPolicy::fail) throw;
            return {static_cast<std::size_t>(sd.size()) - 1, 0.0, true};
          }
        }
      },
      src);
}

/// Builds a certified (N, T) plan with T >= search.tau_min. The phase sum uses
/// the unshifted eigenvalues, so the certificate is a norm bound for the
/// physical evolution; the energy tail uses the shifted ones.
inline RecurrencePlan plan_recurrence(const SpectralData& sd, const TailSource& src, double delta,
                                      const RecurrenceSearch& search = {},
                                      std::vector<ScanSample>* trace = nullptr) {
  const TailCutResult tc = compute_tail_cut(sd, src, delta);
  const RealVector phys = sd.physical_eigenvalues();
  const RecurrenceTime rt = find_recurrence_time(phys, tc.cut, delta, search, trace);

  RecurrencePlan plan;
  plan.delta = delta;
  plan.cut = tc.cut;
  plan.recurrence_time = rt.time;
  plan.achieved_sum = rt.objective;
  plan.tail_mass = tc.tail_mass;
  plan.mode = mode_of(src);
  if (const auto* e = std::get_if<EnergyTail>(&src)) plan.energy_bound = e->bound;
  plan.spectrum_exhausted = tc.exhausted;
  plan.tau_min = search.tau_min;
  plan.shift = sd.shift;
  plan.spectrum_hash = spectrum_hash(sd.eigenvalues);
  if (!plan.certified()) {
    throw std::logic_error("plan_recurrence: certificate inequalities violated");
  }
  return plan;
}

struct Inversion {
  double forward_duration = 0.0;  // t*
  RecurrencePlan plan;
};

/// Forward duration t* = T - s with e^{H t*} within delta of e^{-H s} on the
/// state class named by the tail source.
inline Inversion invert(const SpectralData& sd, double s, double delta, const TailSource& src,
                        RecurrenceSearch search = {}) {
  if (s < 0.0) throw std::invalid_argument("invert: duration must be >= 0");
  search.tau_min = std::max(search.tau_min, s);
  Inversion out;
  out.plan = plan_recurrence(sd, src, delta, search);
  out.forward_duration = std::max(0.0, out.plan.recurrence_time - s);
  return out;
}

/// Random state with <H~> < M (shifted spectrum): a ground-state component
/// plus a random excited direction whose weight keeps the mean energy below
/// M. The excited direction has power-law decaying amplitudes, so some
/// samples put small weight on very high levels.
template <typename Rng>
StateVector sample_energy_bounded_state(const SpectralData& sd, double bound, Rng& rng) {
  const Eigen::Index d = sd.size();
  if (d < 2) throw std::invalid_argument("sample_energy_bounded_state: need at least two levels");
  const double e0 = sd.eigenvalues(0);
  if (!(e0 < bound)) throw std::invalid_argument("sample_energy_bounded_state: ground energy not below M");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double gamma = 0.5 + 1.5 * unit(rng);
  Vector chi = Vector::Zero(d);
  for (Eigen::Index n = 1; n < d; ++n) {
    chi(n) = Complex{gauss(rng), gauss(rng)} * std::pow(static_cast<double>(n), -gamma);
  }
  chi /= chi.norm();
  double e_chi = 0.0;
  for (Eigen::Index n = 1; n < d; ++n) e_chi += std::norm(chi(n)) * sd.eigenvalues(n);
  const double cap = e_chi > e0 ? std::min(1.0, (bound - e0) / (e_chi - e0)) : 1.0;
  const double w = unit(rng) * cap * (1.0 - 1e-9);
  Vector c = std::sqrt(w) * chi;
  c(0) = std::polar(std::sqrt(1.0 - w), 2.0 * std::numbers::pi * unit(rng));
  return sd.eigenvectors * c;
}

/// <psi, H~ psi> with the shifted spectrum.
inline double shifted_energy(const SpectralData& sd, const StateVector& psi) {
  const Vector c = sd.eigenvectors.adjoint() * psi;
  double e = 0.0;
  for (Eigen::Index n = 0; n < c.size(); ++n) e += std::norm(c(n)) * sd.eigenvalues(n);
  return e;
}

/// ||e^{-H s} psi - e^{H t*} psi|| by direct spectral evolution with the
/// unshifted eigenvalues.
inline double inversion_error(const SpectralData& sd, double s, double forward, const StateVector& psi) {
  const Vector c = sd.eigenvectors.adjoint() * psi;
  const RealVector e = sd.physical_eigenvalues();
  Vector diff(c.size());
  for (Eigen::Index n = 0; n < c.size(); ++n) {
    diff(n) = c(n) * (std::polar(1.0, e(n) * s) - std::polar(1.0, -e(n) * forward));
  }
  return diff.norm();
}

struct RecurrenceConfig {
  PlanMode mode = PlanMode::pointwise;
  double delta = 1e-4;
  RecurrenceSearch search{};
  std::vector<StateVector> net;  // finite_net mode
  double energy_bound = 0.0;     // energy_bound mode
  ExhaustionPolicy exhaustion = ExhaustionPolicy::fail;
};

/// Physical inverter: every surrogate is a forward segment of length
/// T - s. Pointwise mode certifies against the state the segment acts on.
class RecurrenceInverter final : public Inverter {
 public:
  RecurrenceInverter(const GeneratorSet& generators, RecurrenceConfig config)
      : generators_(&generators), config_(std::move(config)) {
    if (config_.mode == PlanMode::finite_net && config_.net.empty()) {
      throw std::invalid_argument("RecurrenceInverter: finite_net mode needs net states");
    }
    if (config_.mode == PlanMode::energy_bound && !(config_.energy_bound > 0.0)) {
      throw std::invalid_argument("RecurrenceInverter: energy_bound mode needs M > 0");
    }
  }

  Segment invert(std::size_t generator, double duration, const StateVector* state) override {
    const SpectralData& sd = generators_->at(generator).spectrum;
    TailCutResult tc;
    if (config_.mode == PlanMode::pointwise) {
      if (!state) throw std::invalid_argument("RecurrenceInverter: pointwise mode needs the running state");
      const Vector psi = *state / state->norm();
      tc = compute_tail_cut(sd, PointwiseTail{psi}, config_.delta);
    } else {
      auto it = fixed_cuts_.find(generator);
      if (it == fixed_cuts_.end()) {
        it = fixed_cuts_.emplace(generator, compute_tail_cut(sd, fixed_source(), config_.delta)).first;
      }
      tc = it->second;
    }

    std::uint64_t bits = 0;
    std::memcpy(&bits, &duration, sizeof(double));
    const auto key = std::make_tuple(generator, tc.cut, bits);
    auto hit = times_.find(key);
    if (hit == times_.end()) {
      RecurrenceSearch search = config_.search;
      search.tau_min = std::max(search.tau_min, duration);
      const RealVector phys = sd.physical_eigenvalues();
      hit = times_.emplace(key, find_recurrence_time(phys, tc.cut, config_.delta, search)).first;
    }
    const RecurrenceTime& rt = hit->second;

    RecurrencePlan plan;
    plan.delta = config_.delta;
    plan.cut = tc.cut;
    plan.recurrence_time = rt.time;
    plan.achieved_sum = rt.objective;
    plan.tail_mass = tc.tail_mass;
    plan.mode = config_.mode;
    if (config_.mode == PlanMode::energy_bound) plan.energy_bound = config_.energy_bound;
    plan.spectrum_exhausted = tc.exhausted;
    plan.tau_min = duration;
    plan.shift = sd.shift;
    if (!plan.certified()) throw std::logic_error("RecurrenceInverter: certificate inequalities violated");
    record(generator, plan, sd);
    ++inversions_;
    return Segment{generator, std::max(0.0, rt.time - duration), false};
  }

  bool needs_state() const override { return config_.mode == PlanMode::pointwise; }
  bool physical() const override { return true; }

  const RecurrenceConfig& config() const { return config_; }
  std::size_t inversions() const { return inversions_; }

  /// Distinct plans issued so far, with the generator each belongs to.
  const std::vector<std::pair<std::size_t, RecurrencePlan>>& certificates() const { return plans_; }

  /// Smallest margin delta^2 - decomposition over every plan issued.
  double worst_margin() const {
    double out = std::numeric_limits<double>::infinity();
    for (const auto& [k, p] : plans_) out = std::min(out, p.delta * p.delta - p.decomposition());
    return out;
  }

 private:
  TailSource fixed_source() const {
    if (config_.mode == PlanMode::finite_net) return FiniteNetTail{config_.net};
    return EnergyTail{config_.energy_bound, config_.exhaustion};
  }

  void record(std::size_t generator, RecurrencePlan plan, const SpectralData& sd) {
    for (const auto& [k, p] : plans_) {
      if (k == generator && p.cut == plan.cut && p.tau_min == plan.tau_min) return;
    }
    auto h = hashes_.find(generator);
    if (h == hashes_.end()) h = hashes_.emplace(generator, spectrum_hash(sd.eigenvalues)).first;
    plan.spectrum_hash = h->second;
    plans_.emplace_back(generator, std::move(plan));
  }

  const GeneratorSet* generators_;
  RecurrenceConfig config_;
  std::map<std::size_t, TailCutResult> fixed_cuts_;
  std::map<std::tuple<std::size_t, std::size_t, std::uint64_t>, RecurrenceTime> times_;
  std::map<std::size_t, std::string> hashes_;
  std::vector<std::pair<std::size_t, RecurrencePlan>> plans_;
  std::size_t inversions_ = 0;
};

}  // namespace recurctl
