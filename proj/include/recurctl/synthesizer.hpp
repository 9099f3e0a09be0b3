#pragma once

// Compiles generator expressions over a finite generator set into
// forward-time control sequences, gated by numerical verification.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "recurctl/fock.hpp"
#include "recurctl/propagator.hpp"
#include "recurctl/recurrence.hpp"
#include "recurctl/weyl.hpp"

namespace recurctl {

/// Immutable expression tree over generator indices (0-based).
class GeneratorExpr {
 public:
  enum class Kind { leaf, sum, bracket, scale };

  static GeneratorExpr leaf(std::size_t k) { return GeneratorExpr(std::make_shared<Node>(Node{Kind::leaf, k, 1.0, {}, {}})); }
  static GeneratorExpr sum(const GeneratorExpr& a, const GeneratorExpr& b) {
    return GeneratorExpr(std::make_shared<Node>(Node{Kind::sum, 0, 1.0, a.node_, b.node_}));
  }
  static GeneratorExpr bracket(const GeneratorExpr& a, const GeneratorExpr& b) {
    return GeneratorExpr(std::make_shared<Node>(Node{Kind::bracket, 0, 1.0, a.node_, b.node_}));
  }
  static GeneratorExpr scale(double r, const GeneratorExpr& e) {
    if (!std::isfinite(r)) throw std::invalid_argument("GeneratorExpr: scale factor must be finite");
    return GeneratorExpr(std::make_shared<Node>(Node{Kind::scale, 0, r, e.node_, {}}));
  }

  Kind kind() const { return node_->kind; }
  std::size_t index() const { return node_->index; }
  double factor() const { return node_->factor; }
  GeneratorExpr lhs() const { return GeneratorExpr(node_->a); }
  GeneratorExpr rhs() const { return GeneratorExpr(node_->b); }

  std::size_t depth() const {
    switch (kind()) {
      case Kind::leaf: return 1;
      case Kind::scale: return 1 + lhs().depth();
      default: return 1 + std::max(lhs().depth(), rhs().depth());
    }
  }

  std::size_t max_index() const {
    switch (kind()) {
      case Kind::leaf: return index();
      case Kind::scale: return lhs().max_index();
      default: return std::max(lhs().max_index(), rhs().max_index());
    }
  }

  /// True if the compiled word changes with the product-formula order n.
  bool depends_on_n() const {
    switch (kind()) {
      case Kind::leaf: return false;
      case Kind::scale: return lhs().depends_on_n();
      default: return true;
    }
  }

  /// Printed with 1-based indices, e.g. "[H1, H2 + H3]".
  std::string to_string() const {
    switch (kind()) {
      case Kind::leaf: return "H" + std::to_string(index() + 1);
      case Kind::sum: return "(" + lhs().to_string() + " + " + rhs().to_string() + ")";
      case Kind::bracket: return "[" + lhs().to_string() + ", " + rhs().to_string() + "]";
      case Kind::scale: {
        std::ostringstream os;
        os << std::setprecision(17) << factor() << "*" << lhs().to_string();
        return os.str();
      }
    }
    return {};
  }

 private:
  struct Node {
    Kind kind;
    std::size_t index;
    double factor;
    std::shared_ptr<const Node> a;
    std::shared_ptr<const Node> b;
  };
  explicit GeneratorExpr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : text_(text) {}

  GeneratorExpr parse() {
    GeneratorExpr out = expr();
    if (peek() != '\0') fail("unexpected character");
    return out;
  }

 private:
  char peek() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("parse_generator_expr: " + what + " at offset " + std::to_string(pos_));
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  GeneratorExpr expr() {
    GeneratorExpr out = term();
    while (peek() == '+' || peek() == '-') {
      const bool minus = text_[pos_++] == '-';
      GeneratorExpr rhs = term();
      out = GeneratorExpr::sum(out, minus ? GeneratorExpr::scale(-1.0, rhs) : rhs);
    }
    return out;
  }

  GeneratorExpr term() {
    const char c = peek();
    if (c == '-' || c == '+' || c == '.' || std::isdigit(static_cast<unsigned char>(c))) {
      const char* begin = text_.data() + pos_;
      double r = 0.0;
      auto [ptr, ec] = std::from_chars(begin, text_.data() + text_.size(), r);
      if (ec == std::errc{} && ptr != begin) {
        pos_ += static_cast<std::size_t>(ptr - begin);
        expect('*');
        return GeneratorExpr::scale(r, term());
      }
      if (c == '-') {
        ++pos_;
        return GeneratorExpr::scale(-1.0, term());
      }
      if (c == '+') {
        ++pos_;
        return term();
      }
      fail("expected number");
    }
    return atom();
  }

  GeneratorExpr atom() {
    const char c = peek();
    if (c == 'H') {
      ++pos_;
      const char* begin = text_.data() + pos_;
      std::size_t k = 0;
      auto [ptr, ec] = std::from_chars(begin, text_.data() + text_.size(), k);
      if (ec != std::errc{} || k == 0) fail("expected generator index >= 1");
      pos_ += static_cast<std::size_t>(ptr - begin);
      return GeneratorExpr::leaf(k - 1);
    }
    if (c == '[') {
      ++pos_;
      GeneratorExpr a = expr();
      expect(',');
      GeneratorExpr b = expr();
      expect(']');
      return GeneratorExpr::bracket(a, b);
    }
    if (c == '(') {
      ++pos_;
      GeneratorExpr e = expr();
      expect(')');
      return e;
    }
    fail("expected H<k>, '[' or '('");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses "H1", "[H2, H1]", "(H1 + H2)", "0.5*H1", "H1 - H2" (1-based
/// indices). Accepts everything GeneratorExpr::to_string prints.
inline GeneratorExpr parse_generator_expr(std::string_view text) { return detail::ExprParser(text).parse(); }

/// A Bracket root acts for t^2, anything else for t.
inline double effective_duration(const GeneratorExpr& e, double t) {
  return e.kind() == GeneratorExpr::Kind::bracket ? t * t : t;
}

/// Number of intents compile_word emits at order n.
inline double word_length(const GeneratorExpr& e, std::size_t n) {
  const double nd = static_cast<double>(n);
  switch (e.kind()) {
    case GeneratorExpr::Kind::leaf: return 1.0;
    case GeneratorExpr::Kind::scale: return word_length(e.lhs(), n);
    case GeneratorExpr::Kind::sum: return nd * (word_length(e.lhs(), n) + word_length(e.rhs(), n));
    case GeneratorExpr::Kind::bracket: return nd * nd * 2.0 * (word_length(e.lhs(), n) + word_length(e.rhs(), n));
  }
  return 0.0;
}

/// Word approximating e^{G tau} at product-formula order n; negative
/// durations remain as intents for the inverter.
inline Word compile_word(const GeneratorExpr& e, double tau, std::size_t n) {
  if (n < 1) throw std::invalid_argument("compile_word: n must be >= 1");
  switch (e.kind()) {
    case GeneratorExpr::Kind::leaf: return Word{{e.index(), tau}};
    case GeneratorExpr::Kind::scale: return compile_word(e.lhs(), e.factor() * tau, n);
    case GeneratorExpr::Kind::sum: {
      if (tau < 0.0) return inverse_word(compile_word(e, -tau, n));
      const double step = tau / static_cast<double>(n);
      Word one = compile_word(e.lhs(), step, n);
      const Word b = compile_word(e.rhs(), step, n);
      one.insert(one.end(), b.begin(), b.end());
      return repeat_word(one, n);
    }
    case GeneratorExpr::Kind::bracket: {
      if (tau < 0.0) return compile_word(GeneratorExpr::bracket(e.rhs(), e.lhs()), -tau, n);
      const double s = std::sqrt(tau) / static_cast<double>(n);
      // e^{-A s} e^{-B s} e^{A s} e^{B s} in operator order.
      Word one = compile_word(e.rhs(), s, n);
      for (const auto& part : {compile_word(e.lhs(), s, n), compile_word(e.rhs(), -s, n), compile_word(e.lhs(), -s, n)}) {
        one.insert(one.end(), part.begin(), part.end());
      }
      return repeat_word(one, n * n);
    }
  }
  return {};
}

/// Symbolic skew-hermitian G for the expression.
inline PolyOp symbolic_generator(const GeneratorExpr& e, const GeneratorSet& generators) {
  switch (e.kind()) {
    case GeneratorExpr::Kind::leaf: {
      const auto& src = generators.at(e.index()).source;
      if (!src) throw std::invalid_argument("symbolic_generator: generator has no symbolic source");
      return *src;
    }
    case GeneratorExpr::Kind::scale:
      return (symbolic_generator(e.lhs(), generators) * e.factor()).with_role(Role::skew_hermitian);
    case GeneratorExpr::Kind::sum:
      return (symbolic_generator(e.lhs(), generators) + symbolic_generator(e.rhs(), generators))
          .with_role(Role::skew_hermitian);
    case GeneratorExpr::Kind::bracket:
      return bracket(symbolic_generator(e.lhs(), generators), symbolic_generator(e.rhs(), generators))
          .with_role(Role::skew_hermitian);
  }
  return PolyOp();
}

/// G assembled from the truncated generator matrices.
inline Matrix matrix_generator(const GeneratorExpr& e, const GeneratorSet& generators) {
  switch (e.kind()) {
    case GeneratorExpr::Kind::leaf: return generators.generator_matrix(e.index());
    case GeneratorExpr::Kind::scale: return e.factor() * matrix_generator(e.lhs(), generators);
    case GeneratorExpr::Kind::sum:
      return matrix_generator(e.lhs(), generators) + matrix_generator(e.rhs(), generators);
    case GeneratorExpr::Kind::bracket: {
      const Matrix a = matrix_generator(e.lhs(), generators);
      const Matrix b = matrix_generator(e.rhs(), generators);
      return a * b - b * a;
    }
  }
  return {};
}

enum class OracleKind { automatic, symbolic, matrix };

/// The target unitary e^{G t_eff}, with G taken symbolically and then
/// truncated, or built from the truncated generator matrices.
inline Matrix target_unitary(const GeneratorExpr& e, double t, const GeneratorSet& generators,
                             OracleKind oracle = OracleKind::automatic) {
  if (t < 0.0) throw std::invalid_argument("target_unitary: t must be >= 0");
  if (e.max_index() >= generators.size()) {
    throw std::out_of_range("target_unitary: expression references generator " + std::to_string(e.max_index() + 1) +
                            " of " + std::to_string(generators.size()));
  }
  const bool use_symbolic =
      oracle == OracleKind::symbolic || (oracle == OracleKind::automatic && generators.symbolic());
  Matrix g;
  if (use_symbolic) {
    if (!generators.truncation()) throw std::invalid_argument("target_unitary: no truncation for symbolic oracle");
    g = represent(symbolic_generator(e, generators), *generators.truncation()).matrix;
  } else {
    g = matrix_generator(e, generators);
    g = skew_hermitize(g).matrix;
  }
  return expm_skew(g, effective_duration(e, t));
}

struct Verification {
  double distance = 0.0;
  double fidelity = 0.0;
  Complex overlap{0.0, 0.0};
};

inline Verification compare_states(const StateVector& achieved, const StateVector& target) {
  if (achieved.size() != target.size()) throw std::invalid_argument("verify: dimension mismatch");
  Verification v;
  v.overlap = target.dot(achieved);
  v.distance = (achieved - target).norm();
  v.fidelity = std::abs(v.overlap);
  const double identity = achieved.squaredNorm() + target.squaredNorm() - 2.0 * v.overlap.real();
  if (std::abs(v.distance * v.distance - identity) > 1e-9) {
    throw std::logic_error("verify: |a - b|^2 = |a|^2 + |b|^2 - 2 Re<b, a> violated");
  }
  return v;
}

/// Distance and fidelity of evolve(seq, psi0) to a target state.
inline Verification verify(const ControlSequence& seq, const StateVector& psi0, const StateVector& target,
                           const GeneratorSet& generators) {
  if (!is_normalized(psi0, 1e-10)) throw std::invalid_argument("verify: psi0 must be normalized");
  return compare_states(evolve(seq, psi0, generators), target);
}

/// Target given as e^{G t_eff} psi0 and resolved by the dense oracle.
inline Verification verify(const ControlSequence& seq, const StateVector& psi0, const GeneratorExpr& target, double t,
                           const GeneratorSet& generators, OracleKind oracle = OracleKind::automatic) {
  const StateVector goal = target_unitary(target, t, generators, oracle) * psi0;
  return verify(seq, psi0, goal, generators);
}

/// How negative durations are realized.
struct InverterSpec {
  bool exact = false;  // oracle-only reversed segments
  RecurrenceConfig recurrence{};
};

inline std::unique_ptr<Inverter> make_inverter(const InverterSpec& spec, const GeneratorSet& generators) {
  if (spec.exact) return std::make_unique<ExactInverter>();
  return std::make_unique<RecurrenceInverter>(generators, spec.recurrence);
}

struct CompileConfig {
  double epsilon = 1e-3;
  std::size_t n_start = 1;
  std::size_t n_budget = 64;
  double max_segments = 2e6;
  OracleKind oracle = OracleKind::automatic;
  /// Extra states the result must meet epsilon on; psi0 is always checked.
  std::vector<StateVector> verification_states;
};

struct CompileAttempt {
  std::size_t n = 0;
  double distance = 0.0;
  std::size_t segments = 0;
};

struct CompileResult {
  ControlSequence sequence;
  std::size_t n = 0;
  double distance = std::numeric_limits<double>::infinity();  // worst over verification states
  double fidelity = 0.0;                                      // on psi0
  std::size_t inversions = 0;
  std::vector<CompileAttempt> attempts;
  std::vector<std::pair<std::size_t, RecurrencePlan>> certificates;
};

class CompileBudgetExhausted : public std::runtime_error {
 public:
  explicit CompileBudgetExhausted(CompileResult best, double epsilon)
      : std::runtime_error("compile: budget exhausted, best distance " + std::to_string(best.distance) + " at n = " +
                           std::to_string(best.n) + " (epsilon " + std::to_string(epsilon) + ")"),
        best_(std::move(best)) {}
  const CompileResult& best() const { return best_; }

 private:
  CompileResult best_;
};

/// Compiles e^{G t_eff} psi0 into a sequence. n doubles from n_start until
/// every verification state is within epsilon; the inverter sees the
/// running state from psi0.
inline CompileResult compile(const GeneratorExpr& expr, double t, const GeneratorSet& generators,
                             const StateVector& psi0, const InverterSpec& inverter_spec,
                             const CompileConfig& config = {}) {
  if (!(config.epsilon > 0.0)) throw std::invalid_argument("compile: epsilon must be > 0");
  if (t < 0.0) throw std::invalid_argument("compile: t must be >= 0");
  if (config.n_start < 1 || config.n_budget < config.n_start) {
    throw std::invalid_argument("compile: need 1 <= n_start <= n_budget");
  }
  if (expr.max_index() >= generators.size()) {
    throw std::out_of_range("compile: expression references generator " + std::to_string(expr.max_index() + 1) +
                            " of " + std::to_string(generators.size()));
  }
  if (!is_normalized(psi0, 1e-10)) throw std::invalid_argument("compile: psi0 must be normalized");

  const Matrix u = target_unitary(expr, t, generators, config.oracle);
  std::vector<StateVector> states{psi0};
  for (const auto& s : config.verification_states) states.push_back(s / s.norm());
  std::vector<StateVector> goals;
  for (const auto& s : states) goals.push_back(u * s);

  const double tau = effective_duration(expr, t);
  CompileResult best;
  for (std::size_t n = config.n_start; n <= config.n_budget; n *= 2) {
    if (word_length(expr, n) > config.max_segments) break;
    const Word word = compile_word(expr, tau, n);
    auto inverter = make_inverter(inverter_spec, generators);
    Cursor cursor{&generators, psi0};
    ControlSequence seq = realize(word, *inverter, inverter->needs_state() ? &cursor : nullptr,
                                  expr.to_string() + " t=" + std::to_string(t) + " n=" + std::to_string(n));
    for (const auto& s : seq.segments()) {
      if (s.duration < 0.0) throw std::logic_error("compile: negative duration emitted");
    }

    CompileResult r;
    r.n = n;
    r.distance = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const Verification v = verify(seq, states[i], goals[i], generators);
      r.distance = std::max(r.distance, v.distance);
      if (i == 0) r.fidelity = v.fidelity;
    }
    r.inversions = static_cast<std::size_t>(
        std::count_if(word.begin(), word.end(), [](const Intent& i) { return i.duration < 0.0; }));
    if (const auto* rec = dynamic_cast<const RecurrenceInverter*>(inverter.get())) r.certificates = rec->certificates();
    r.attempts = best.attempts;
    r.attempts.push_back({n, r.distance, seq.size()});
    r.sequence = std::move(seq);

    const bool done = r.distance < config.epsilon;
    if (done || r.distance < best.distance || best.attempts.empty()) {
      best = std::move(r);
    } else {
      best.attempts = std::move(r.attempts);
    }
    if (done) return best;
    if (!expr.depends_on_n()) break;
  }
  throw CompileBudgetExhausted(std::move(best), config.epsilon);
}

// ---------------------------------------------------------------------------
// Reachability reports

struct ReachTarget {
  std::string name;
  GeneratorExpr expr;
  double t = 0.0;
};

struct ReachEntry {
  std::string name;
  std::string expression;
  double t = 0.0;
  bool success = false;
  std::string error;
  CompileResult result;  // best achieved on failure
  double wall_seconds = 0.0;
};

struct ReachabilityReport {
  std::vector<ReachEntry> entries;
  double epsilon = 0.0;

  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const ReachEntry& e) { return !e.success; }));
  }
  bool all_passed() const { return failures() == 0; }
};

struct ReachabilityConfig {
  CompileConfig compile{};
  InverterSpec inverter{};
  unsigned jobs = 1;
};

inline ReachEntry reach_one(const ReachTarget& target, const GeneratorSet& generators, const StateVector& psi0,
                            const ReachabilityConfig& config) {
  ReachEntry e;
  e.name = target.name;
  e.expression = target.expr.to_string();
  e.t = target.t;
  const auto start = std::chrono::steady_clock::now();
  try {
    e.result = compile(target.expr, target.t, generators, psi0, config.inverter, config.compile);
    e.success = true;
  } catch (const CompileBudgetExhausted& ex) {
    e.result = ex.best();
    e.error = ex.what();
  } catch (const std::exception& ex) {
    e.error = ex.what();
  }
  e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return e;
}

/// Compiles every target; failures are recorded per entry and never abort the report.
inline ReachabilityReport reachability_report(const GeneratorSet& generators, const StateVector& psi0,
                                              const std::vector<ReachTarget>& targets,
                                              const ReachabilityConfig& config = {}) {
  ReachabilityReport report;
  report.epsilon = config.compile.epsilon;
  report.entries.resize(targets.size());
  const std::size_t jobs = std::max(1u, config.jobs);
  for (std::size_t start = 0; start < targets.size(); start += jobs) {
    const std::size_t stop = std::min(targets.size(), start + jobs);
    if (stop - start == 1) {
      report.entries[start] = reach_one(targets[start], generators, psi0, config);
      continue;
    }
    std::vector<std::future<ReachEntry>> futures;
    for (std::size_t i = start; i < stop; ++i) {
      futures.push_back(std::async(std::launch::async, reach_one, std::cref(targets[i]), std::cref(generators),
                                   std::cref(psi0), std::cref(config)));
    }
    for (std::size_t i = start; i < stop; ++i) report.entries[i] = futures[i - start].get();
  }
  return report;
}

}  // namespace recurctl
