#pragma once

// Polynomials in per-mode position and momentum operators, kept in a
// canonical q-before-p order under [q_i, p_j] = i delta_ij.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace recurctl {

using Complex = std::complex<double>;

inline constexpr Complex kI{0.0, 1.0};

enum class Quadrature : std::uint8_t { q, p };

struct Factor {
  std::size_t mode = 0;
  Quadrature kind = Quadrature::q;
};

inline Factor q_factor(std::size_t mode) { return {mode, Quadrature::q}; }
inline Factor p_factor(std::size_t mode) { return {mode, Quadrature::p}; }

/// q_1^{a_1} p_1^{b_1} ... q_m^{a_m} p_m^{b_m}, stored as (a_i, b_i) pairs.
class Monomial {
 public:
  using Powers = std::pair<unsigned, unsigned>;

  Monomial() = default;
  explicit Monomial(std::size_t mode_count) : powers_(mode_count, Powers{0, 0}) {}
  Monomial(std::size_t mode_count, std::initializer_list<Powers> leading)
      : powers_(mode_count, Powers{0, 0}) {
    if (leading.size() > mode_count) {
      throw std::out_of_range("Monomial: more exponent pairs than modes");
    }
    std::copy(leading.begin(), leading.end(), powers_.begin());
  }

  std::size_t mode_count() const { return powers_.size(); }
  unsigned q_power(std::size_t mode) const { return powers_.at(mode).first; }
  unsigned p_power(std::size_t mode) const { return powers_.at(mode).second; }
  const Powers& powers(std::size_t mode) const { return powers_.at(mode); }

  void set(std::size_t mode, unsigned q_pow, unsigned p_pow) {
    powers_.at(mode) = {q_pow, p_pow};
  }

  unsigned mode_degree(std::size_t mode) const {
    return powers_.at(mode).first + powers_.at(mode).second;
  }

  unsigned degree() const {
    unsigned d = 0;
    for (const auto& [a, b] : powers_) d += a + b;
    return d;
  }

  bool is_identity() const { return degree() == 0; }

  bool touches(std::size_t mode) const { return mode_degree(mode) != 0; }

  auto operator<=>(const Monomial&) const = default;
  bool operator==(const Monomial&) const = default;

 private:
  std::vector<Powers> powers_;
};

enum class Role : std::uint8_t { hermitian, skew_hermitian, general };

inline const char* to_string(Role role) {
  switch (role) {
    case Role::hermitian: return "hermitian";
    case Role::skew_hermitian: return "skew-hermitian";
    case Role::general: return "general";
  }
  return "general";
}

/// Complex polynomial operator. Zero coefficients are never stored.
class PolyOp {
 public:
  using Terms = std::map<Monomial, Complex>;

  explicit PolyOp(std::size_t mode_count = 1, Role role = Role::general)
      : mode_count_(mode_count), role_(role) {
    if (mode_count == 0) throw std::invalid_argument("PolyOp: mode_count must be positive");
  }

  static PolyOp identity(std::size_t mode_count, Complex c = 1.0) {
    PolyOp out(mode_count);
    out.add_term(Monomial(mode_count), c);
    return out;
  }

  static PolyOp monomial(const Monomial& m, Complex c = 1.0) {
    PolyOp out(m.mode_count());
    out.add_term(m, c);
    return out;
  }

  static PolyOp position(std::size_t mode, std::size_t mode_count) {
    Monomial m(mode_count);
    m.set(mode, 1, 0);
    return monomial(m).with_role(Role::hermitian);
  }

  static PolyOp momentum(std::size_t mode, std::size_t mode_count) {
    Monomial m(mode_count);
    m.set(mode, 0, 1);
    return monomial(m).with_role(Role::hermitian);
  }

  std::size_t mode_count() const { return mode_count_; }
  const Terms& terms() const { return terms_; }
  Role role() const { return role_; }
  std::size_t size() const { return terms_.size(); }
  bool is_zero() const { return terms_.empty(); }

  PolyOp with_role(Role role) const {
    PolyOp out = *this;
    out.role_ = role;
    return out;
  }

  Complex coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? Complex{} : it->second;
  }

  unsigned degree() const {
    unsigned d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
    return d;
  }

  bool touches(std::size_t mode) const {
    return std::any_of(terms_.begin(), terms_.end(),
                       [mode](const auto& t) { return t.first.touches(mode); });
  }

  double max_abs_coefficient() const {
    double out = 0.0;
    for (const auto& [m, c] : terms_) out = std::max(out, std::abs(c));
    return out;
  }

  void add_term(const Monomial& m, Complex c) {
    if (m.mode_count() != mode_count_) {
      throw std::invalid_argument("PolyOp: monomial mode_count mismatch");
    }
    if (c == Complex{}) return;
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (it->second == Complex{}) terms_.erase(it);
    }
  }

  /// Drops coefficients with magnitude <= tol.
  PolyOp pruned(double tol) const {
    PolyOp out(mode_count_, role_);
    for (const auto& [m, c] : terms_) {
      if (std::abs(c) > tol) out.terms_.emplace(m, c);
    }
    return out;
  }

  PolyOp& operator+=(const PolyOp& other) {
    check_modes(other);
    for (const auto& [m, c] : other.terms_) add_term(m, c);
    role_ = role_ == other.role_ ? role_ : Role::general;
    return *this;
  }

  PolyOp& operator-=(const PolyOp& other) {
    check_modes(other);
    for (const auto& [m, c] : other.terms_) add_term(m, -c);
    role_ = role_ == other.role_ ? role_ : Role::general;
    return *this;
  }

  PolyOp& operator*=(Complex scalar) {
    if (scalar == Complex{}) {
      terms_.clear();
      return *this;
    }
    for (auto& [m, c] : terms_) c *= scalar;
    if (scalar.imag() != 0.0) {
      if (scalar.real() != 0.0) {
        role_ = Role::general;
      } else if (role_ == Role::hermitian) {
        role_ = Role::skew_hermitian;
      } else if (role_ == Role::skew_hermitian) {
        role_ = Role::hermitian;
      }
    }
    return *this;
  }

  friend PolyOp operator+(PolyOp a, const PolyOp& b) { return a += b; }
  friend PolyOp operator-(PolyOp a, const PolyOp& b) { return a -= b; }
  friend PolyOp operator*(PolyOp a, Complex s) { return a *= s; }
  friend PolyOp operator*(Complex s, PolyOp a) { return a *= s; }
  friend PolyOp operator*(PolyOp a, double s) { return a *= Complex{s, 0.0}; }
  friend PolyOp operator*(double s, PolyOp a) { return a *= Complex{s, 0.0}; }
  friend PolyOp operator-(PolyOp a) { return a *= Complex{-1.0, 0.0}; }

  friend PolyOp operator*(const PolyOp& a, const PolyOp& b);

  /// Coefficient-level equality; the role flag is not compared.
  friend bool operator==(const PolyOp& a, const PolyOp& b) {
    return a.mode_count_ == b.mode_count_ && a.terms_ == b.terms_;
  }

 private:
  void check_modes(const PolyOp& other) const {
    if (other.mode_count_ != mode_count_) {
      throw std::invalid_argument("PolyOp: mode_count mismatch");
    }
  }

  std::size_t mode_count_;
  Role role_;
  Terms terms_;
};

namespace detail {

inline double binomial(unsigned n, unsigned k) {
  if (k > n) return 0.0;
  double out = 1.0;
  for (unsigned i = 1; i <= k; ++i) out = out * static_cast<double>(n - k + i) / i;
  return out;
}

inline double factorial(unsigned n) {
  double out = 1.0;
  for (unsigned i = 2; i <= n; ++i) out *= i;
  return out;
}

inline Complex minus_i_power(unsigned k) {
  switch (k % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, -1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, 1.0};
  }
}

// p^b q^c = sum_k k! C(b,k) C(c,k) (-i)^k q^(c-k) p^(b-k)
struct ReorderTerm {
  unsigned k;
  Complex weight;
};

inline std::vector<ReorderTerm> reorder_p_past_q(unsigned b, unsigned c) {
  std::vector<ReorderTerm> out;
  const unsigned kmax = std::min(b, c);
  out.reserve(kmax + 1);
  for (unsigned k = 0; k <= kmax; ++k) {
    const double w = factorial(k) * binomial(b, k) * binomial(c, k);
    out.push_back({k, w * minus_i_power(k)});
  }
  return out;
}

using WeightedMonomials = std::vector<std::pair<Monomial, Complex>>;

// Expands a product whose per-mode factors are q^a p^b q^c p^d into canonical
// monomials; modes are independent so the expansion is a per-mode outer product.
template <typename PerMode>
WeightedMonomials expand_per_mode(std::size_t mode_count, PerMode&& per_mode) {
  WeightedMonomials acc{{Monomial(mode_count), Complex{1.0, 0.0}}};
  for (std::size_t mode = 0; mode < mode_count; ++mode) {
    std::vector<std::pair<Monomial::Powers, Complex>> local = per_mode(mode);
    if (local.size() == 1 && local.front().second == Complex{1.0, 0.0}) {
      for (auto& [m, w] : acc) m.set(mode, local.front().first.first, local.front().first.second);
      continue;
    }
    WeightedMonomials next;
    next.reserve(acc.size() * local.size());
    for (const auto& [m, w] : acc) {
      for (const auto& [pw, lw] : local) {
        Monomial n = m;
        n.set(mode, pw.first, pw.second);
        next.emplace_back(std::move(n), w * lw);
      }
    }
    acc = std::move(next);
  }
  return acc;
}

inline WeightedMonomials multiply_monomials(const Monomial& x, const Monomial& y) {
  return expand_per_mode(x.mode_count(), [&](std::size_t mode) {
    const auto [a, b] = x.powers(mode);
    const auto [c, d] = y.powers(mode);
    std::vector<std::pair<Monomial::Powers, Complex>> local;
    for (const auto& t : reorder_p_past_q(b, c)) {
      local.push_back({{a + c - t.k, b + d - t.k}, t.weight});
    }
    return local;
  });
}

// (q^a p^b)^dagger = p^b q^a per mode; modes commute so the adjoint of the
// product is the product of per-mode adjoints.
inline WeightedMonomials adjoint_monomial(const Monomial& x) {
  return expand_per_mode(x.mode_count(), [&](std::size_t mode) {
    const auto [a, b] = x.powers(mode);
    std::vector<std::pair<Monomial::Powers, Complex>> local;
    for (const auto& t : reorder_p_past_q(b, a)) {
      local.push_back({{a - t.k, b - t.k}, t.weight});
    }
    return local;
  });
}

}  // namespace detail

inline PolyOp operator*(const PolyOp& a, const PolyOp& b) {
  a.check_modes(b);
  PolyOp out(a.mode_count());
  for (const auto& [ma, ca] : a.terms_) {
    for (const auto& [mb, cb] : b.terms_) {
      for (const auto& [m, w] : detail::multiply_monomials(ma, mb)) {
        out.add_term(m, ca * cb * w);
      }
    }
  }
  return out;
}

struct RawTerm {
  std::vector<Factor> factors;
  Complex coefficient{1.0, 0.0};
};

/// Brings arbitrary products of q and p factors into canonical order.
inline PolyOp canonicalize(const std::vector<RawTerm>& raw, std::size_t mode_count) {
  PolyOp out(mode_count);
  for (const auto& term : raw) {
    PolyOp product = PolyOp::identity(mode_count, term.coefficient);
    for (const auto& f : term.factors) {
      if (f.mode >= mode_count) {
        throw std::out_of_range("canonicalize: factor mode " + std::to_string(f.mode) +
                                " out of range for " + std::to_string(mode_count) + " modes");
      }
      product = product * (f.kind == Quadrature::q ? PolyOp::position(f.mode, mode_count)
                                                   : PolyOp::momentum(f.mode, mode_count));
    }
    out += product;
  }
  return out.with_role(Role::general);
}

inline PolyOp adjoint(const PolyOp& a) {
  PolyOp out(a.mode_count());
  for (const auto& [m, c] : a.terms()) {
    for (const auto& [n, w] : detail::adjoint_monomial(m)) out.add_term(n, std::conj(c) * w);
  }
  return out.with_role(a.role());
}

/// Max coefficient magnitude of a - b.
inline double max_abs_difference(const PolyOp& a, const PolyOp& b) {
  return (a - b).max_abs_coefficient();
}

inline bool is_hermitian(const PolyOp& a, double tol = 0.0) {
  return max_abs_difference(adjoint(a), a) <= tol * std::max(1.0, a.max_abs_coefficient());
}

inline bool is_skew_hermitian(const PolyOp& a, double tol = 0.0) {
  return max_abs_difference(adjoint(a), -a) <= tol * std::max(1.0, a.max_abs_coefficient());
}

/// Role inferred from the coefficients; zero counts as hermitian.
inline Role classify(const PolyOp& a, double tol = 1e-12) {
  if (is_hermitian(a, tol)) return Role::hermitian;
  if (is_skew_hermitian(a, tol)) return Role::skew_hermitian;
  return Role::general;
}

/// H = -i H~ : hermitian Hamiltonian to skew-hermitian generator.
inline PolyOp to_skew(const PolyOp& hamiltonian) {
  return (hamiltonian * Complex{0.0, -1.0}).with_role(Role::skew_hermitian);
}

/// H~ = i H : skew-hermitian generator back to its Hamiltonian.
inline PolyOp to_hermitian(const PolyOp& generator) {
  return (generator * kI).with_role(Role::hermitian);
}

inline PolyOp bracket(const PolyOp& a, const PolyOp& b) {
  if (a.mode_count() != b.mode_count()) {
    throw std::invalid_argument("bracket: mode_count mismatch (" + std::to_string(a.mode_count()) +
                                " vs " + std::to_string(b.mode_count()) + ")");
  }
  PolyOp out = a * b - b * a;
  const bool closed = (a.role() == Role::skew_hermitian && b.role() == Role::skew_hermitian) ||
                      (a.role() == Role::hermitian && b.role() == Role::hermitian);
  if (!closed) return out.with_role(Role::general);
  if (!is_skew_hermitian(out, 1e-9)) {
    throw std::logic_error("bracket: result of two same-role operators is not skew-hermitian");
  }
  return out.with_role(Role::skew_hermitian);
}

/// i * (M + M^dagger) / 2 for M = q_1^{a_1} p_1^{b_1} ...; skew-hermitian.
inline PolyOp symmetrized_generator(const Monomial& m) {
  PolyOp mono = PolyOp::monomial(m);
  return ((mono + adjoint(mono)) * Complex{0.0, 0.5}).with_role(Role::skew_hermitian);
}

// ---------------------------------------------------------------------------
// Text form: terms "coeff * q1^a p1^b q2^c p2^d" joined by " + ", with the
// coefficient written "(re,im)". Mode labels are 1-based.

inline std::string format_coefficient(Complex c) {
  std::ostringstream os;
  os.precision(17);
  os << '(' << c.real() + 0.0 << ',' << c.imag() + 0.0 << ')';  // + 0.0 drops negative zero
  return os.str();
}

inline std::string to_string(const Monomial& m) {
  std::string out;
  for (std::size_t i = 0; i < m.mode_count(); ++i) {
    const auto [a, b] = m.powers(i);
    auto emit = [&](char sym, unsigned pw) {
      if (pw == 0) return;
      if (!out.empty()) out += ' ';
      out += sym;
      out += std::to_string(i + 1);
      if (pw > 1) out += '^' + std::to_string(pw);
    };
    emit('q', a);
    emit('p', b);
  }
  return out.empty() ? "1" : out;
}

inline std::string to_string(const PolyOp& a) {
  if (a.is_zero()) return "0";
  std::string out;
  for (const auto& [m, c] : a.terms()) {
    if (!out.empty()) out += " + ";
    out += format_coefficient(c) + " * " + to_string(m);
  }
  return out;
}

namespace detail {

class PolyParser {
 public:
  PolyParser(std::string_view text, std::size_t mode_count) : text_(text), modes_(mode_count) {}

  PolyOp parse() {
    PolyOp out(modes_);
    skip_ws();
    if (peek() == '0' && rest_is_zero_literal()) return out;
    while (true) {
      skip_ws();
      const Complex c = parse_coefficient();
      skip_ws();
      expect('*');
      skip_ws();
      const Monomial m = parse_monomial();
      out.add_term(m, c);
      skip_ws();
      if (pos_ >= text_.size()) break;
      expect('+');
    }
    return out;
  }

 private:
  bool rest_is_zero_literal() const {
    std::string_view rest = text_.substr(pos_);
    while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) rest.remove_suffix(1);
    return rest == "0";
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("parse_polyop: " + what + " at offset " + std::to_string(pos_));
  }

  void expect(char ch) {
    if (peek() != ch) fail(std::string("expected '") + ch + "'");
    ++pos_;
  }

  double parse_number() {
    skip_ws();
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{}) fail("expected number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  unsigned parse_unsigned() {
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{}) fail("expected integer");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  Complex parse_coefficient() {
    if (peek() == '(') {
      ++pos_;
      const double re = parse_number();
      skip_ws();
      expect(',');
      const double im = parse_number();
      skip_ws();
      expect(')');
      return {re, im};
    }
    return {parse_number(), 0.0};
  }

  Monomial parse_monomial() {
    Monomial m(modes_);
    if (peek() == '1') {
      ++pos_;
      return m;
    }
    bool any = false;
    while (peek() == 'q' || peek() == 'p') {
      const char sym = peek();
      ++pos_;
      const unsigned label = parse_unsigned();
      if (label == 0 || label > modes_) fail("mode label out of range");
      unsigned pw = 1;
      if (peek() == '^') {
        ++pos_;
        pw = parse_unsigned();
      }
      const std::size_t mode = label - 1;
      const auto [a, b] = m.powers(mode);
      if (sym == 'q') {
        if (b != 0) fail("q factor after p factor on the same mode");
        m.set(mode, a + pw, b);
      } else {
        m.set(mode, a, b + pw);
      }
      any = true;
      skip_ws();
    }
    if (!any) fail("expected monomial");
    return m;
  }

  std::string_view text_;
  std::size_t modes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Inverse of to_string(PolyOp). Bare real coefficients ("2 * q1") are accepted.
/// The role is inferred from the coefficients.
inline PolyOp parse_polyop(std::string_view text, std::size_t mode_count) {
  PolyOp out = detail::PolyParser(text, mode_count).parse();
  return out.with_role(classify(out));
}

namespace detail {

// Recursive-descent evaluator for operator expressions such as
// "0.5*(q1^2 + p1^2) - 2 q1 p2" or "i*(q1 p1 + p1 q1)/2". Products keep
// their written order and are reordered by the algebra.
class OperatorParser {
 public:
  OperatorParser(std::string_view text, std::size_t mode_count) : text_(text), modes_(mode_count) {}

  PolyOp parse() {
    PolyOp out = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character");
    return out;
  }

 private:
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("parse_operator: " + what + " at offset " + std::to_string(pos_));
  }

  PolyOp expr() {
    PolyOp out(modes_);
    bool negate = false;
    if (peek() == '+' || peek() == '-') negate = text_[pos_++] == '-';
    PolyOp t = term();
    out += negate ? -t : t;
    while (peek() == '+' || peek() == '-') {
      negate = text_[pos_++] == '-';
      t = term();
      out += negate ? -t : t;
    }
    return out;
  }

  bool starts_factor(char c) const {
    return c == '(' || c == 'i' || c == 'q' || c == 'p' || c == '.' || std::isdigit(static_cast<unsigned char>(c));
  }

  PolyOp term() {
    PolyOp out = power();
    while (true) {
      const char c = peek();
      if (c == '*') {
        ++pos_;
        out = out * power();
      } else if (c == '/') {
        ++pos_;
        const double d = number();
        if (d == 0.0) fail("division by zero");
        out *= Complex{1.0 / d, 0.0};
      } else if (starts_factor(c)) {
        out = out * power();
      } else {
        return out;
      }
    }
  }

  PolyOp power() {
    PolyOp base = atom();
    if (peek() != '^') return base;
    ++pos_;
    skip_ws();
    const unsigned k = integer();
    PolyOp out = PolyOp::identity(modes_);
    for (unsigned r = 0; r < k; ++r) out = out * base;
    return out;
  }

  PolyOp atom() {
    const char c = peek();
    if (c == '(') {
      ++pos_;
      const std::size_t mark = pos_;
      // "(re, im)" complex literal, else a parenthesized expression.
      if (auto re = try_number(); re && peek() == ',') {
        ++pos_;
        const double im = number();
        if (peek() != ')') fail("expected ')'");
        ++pos_;
        return PolyOp::identity(modes_, Complex{*re, im});
      }
      pos_ = mark;
      PolyOp inner = expr();
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return inner;
    }
    if (c == 'i') {
      ++pos_;
      return PolyOp::identity(modes_, kI);
    }
    if (c == 'q' || c == 'p') {
      ++pos_;
      const unsigned label = integer();
      if (label == 0 || label > modes_) fail("mode label out of range");
      return c == 'q' ? PolyOp::position(label - 1, modes_).with_role(Role::general)
                      : PolyOp::momentum(label - 1, modes_).with_role(Role::general);
    }
    return PolyOp::identity(modes_, number());
  }

  std::optional<double> try_number() {
    skip_ws();
    const char* begin = text_.data() + pos_;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, text_.data() + text_.size(), value);
    if (ec != std::errc{} || ptr == begin) return std::nullopt;
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  double number() {
    auto v = try_number();
    if (!v) fail("expected number");
    return *v;
  }

  unsigned integer() {
    const char* begin = text_.data() + pos_;
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(begin, text_.data() + text_.size(), value);
    if (ec != std::errc{}) fail("expected integer");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  std::string_view text_;
  std::size_t modes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Evaluates a free-form operator expression. Accepts everything
/// to_string(PolyOp) prints as well as products in any order, "i", "/",
/// "^" and parentheses. The role is inferred from the result.
inline PolyOp parse_operator(std::string_view text, std::size_t mode_count) {
  PolyOp out = detail::OperatorParser(text, mode_count).parse();
  return out.with_role(classify(out));
}

}  // namespace recurctl
