#include <cmath>
#include <numbers>
#include <random>

#include "catch_amalgamated.hpp"
#include "support/oracles.hpp"

using namespace recurctl;

namespace {

constexpr double kPi = std::numbers::pi;

PolyOp op(const char* text, std::size_t modes = 1) { return parse_operator(text, modes); }

GeneratorSet qp_system(std::size_t d) { return GeneratorSet({op("q1"), op("p1")}, TruncationSpec::uniform(1, d)); }

InverterSpec exact_inverter() {
  InverterSpec s;
  s.exact = true;
  return s;
}

}  // namespace

TEST_CASE("generator expressions print and parse with 1-based indices", "[synthesizer]") {
  const auto e = GeneratorExpr::bracket(GeneratorExpr::leaf(1), GeneratorExpr::leaf(0));
  CHECK(e.to_string() == "[H2, H1]");
  CHECK(e.depth() == 2);
  CHECK(e.max_index() == 1);
  for (const char* text : {"H1", "[H2, H1]", "(H1 + H2)", "[[H1, H2], H3]", "(0.5*H1 + [H1, H2])"}) {
    CHECK(parse_generator_expr(text).to_string() == parse_generator_expr(parse_generator_expr(text).to_string()).to_string());
  }
  CHECK(parse_generator_expr("H3").index() == 2);
  CHECK(parse_generator_expr("H1 - H2").kind() == GeneratorExpr::Kind::sum);
  CHECK_THROWS_AS(parse_generator_expr("H0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_generator_expr("[H1, H2"), std::invalid_argument);
  CHECK_FALSE(GeneratorExpr::leaf(0).depends_on_n());
  CHECK(e.depends_on_n());
}

TEST_CASE("words", "[synthesizer]") {
  const Word leaf = compile_word(GeneratorExpr::leaf(2), 1.3, 8);
  REQUIRE(leaf.size() == 1);
  CHECK(leaf[0].generator == 2);
  CHECK(leaf[0].duration == 1.3);

  const auto sum = GeneratorExpr::sum(GeneratorExpr::leaf(0), GeneratorExpr::leaf(1));
  CHECK(compile_word(sum, 0.6, 3).size() == 6);
  CHECK(word_length(sum, 3) == 6.0);

  const auto br = GeneratorExpr::bracket(GeneratorExpr::leaf(0), GeneratorExpr::leaf(1));
  const Word w = compile_word(br, 0.25, 2);
  CHECK(w.size() == 16);
  CHECK(word_length(br, 2) == 16.0);
  // time order: rhs, lhs, rhs inverse, lhs inverse, at step sqrt(tau) / n
  CHECK(w[0].generator == 1);
  CHECK(w[1].generator == 0);
  CHECK(w[2].generator == 1);
  CHECK(w[3].generator == 0);
  CHECK(w[0].duration == 0.25);
  CHECK(w[2].duration == -0.25);

  // a negative bracket swaps its children
  const Word neg = compile_word(br, -0.25, 2);
  CHECK(neg[0].generator == 0);
  CHECK(neg[0].duration == 0.25);
  CHECK(effective_duration(br, 0.5) == 0.25);
  CHECK(effective_duration(sum, 0.5) == 0.5);
}

TEST_CASE("verification", "[synthesizer]") {
  const GeneratorSet gens = qp_system(8);
  const StateVector psi = vacuum(*gens.truncation());
  const Verification same = verify(ControlSequence{}, psi, psi, gens);
  CHECK(same.distance == 0.0);
  CHECK(same.fidelity == 1.0);
  const Verification orth = verify(ControlSequence{}, psi, fock_state(*gens.truncation(), {3}), gens);
  CHECK(orth.fidelity == 0.0);
  CHECK(std::abs(orth.distance - std::sqrt(2.0)) < 1e-15);
}

TEST_CASE("symbolic and matrix oracles agree on the interior", "[synthesizer]") {
  const GeneratorSet gens({op("0.5*q1^2"), op("0.5*p1^2")}, TruncationSpec::uniform(1, 40));
  const auto br = GeneratorExpr::bracket(GeneratorExpr::leaf(0), GeneratorExpr::leaf(1));
  const StateVector psi = vacuum(*gens.truncation());
  const StateVector a = target_unitary(br, 0.5, gens, OracleKind::symbolic) * psi;
  const StateVector b = target_unitary(br, 0.5, gens, OracleKind::matrix) * psi;
  CHECK((a - b).norm() < 1e-6);
  const Matrix g0 = gens.generator_matrix(0), g1 = gens.generator_matrix(1);
  CHECK((b - oracle::expm(g0 * g1 - g1 * g0, 0.25) * psi).norm() < 1e-10);
}

TEST_CASE("compiling a sum to epsilon", "[synthesizer]") {
  const GeneratorSet gens = qp_system(32);
  const StateVector psi = vacuum(*gens.truncation());
  const auto sum = GeneratorExpr::sum(GeneratorExpr::leaf(0), GeneratorExpr::leaf(1));
  CompileConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.n_budget = 512;
  const CompileResult r = compile(sum, 0.7, gens, psi, InverterSpec{}, cfg);
  const StateVector goal = oracle::expm(gens.generator_matrix(0) + gens.generator_matrix(1), 0.7) * psi;
  CHECK((evolve(r.sequence, psi, gens) - goal).norm() < 1e-3);
  CHECK(r.distance < 1e-3);
  CHECK(r.inversions == 0);
  CHECK(r.sequence.physical());
  CHECK(r.attempts.size() >= 2);
}

TEST_CASE("a negated harmonic generator becomes one forward segment", "[synthesizer]") {
  const GeneratorSet gens({op("0.5*(q1^2 + p1^2)")}, TruncationSpec::uniform(1, 32, 8));
  std::mt19937_64 rng(23);
  const StateVector psi = random_state(*gens.truncation(), rng, 24);
  InverterSpec inv;
  inv.recurrence.delta = 1e-6;
  const auto e = GeneratorExpr::scale(-1.0, GeneratorExpr::leaf(0));
  const CompileResult r = compile(e, 1.0, gens, psi, inv, CompileConfig{1e-5});
  REQUIRE(r.sequence.size() == 1);
  CHECK(std::abs(r.sequence.segments()[0].duration - (4.0 * kPi - 1.0)) < 1e-9);
  CHECK(r.distance < 1e-6);
  CHECK(r.inversions == 1);
  CHECK(r.certificates.size() == 1);
}

TEST_CASE("the q/p bracket is a global phase", "[synthesizer]") {
  const GeneratorSet gens = qp_system(32);
  const StateVector psi = vacuum(*gens.truncation());
  const auto br = parse_generator_expr("[H1, H2]");
  const StateVector goal = std::polar(1.0, -0.25) * psi;
  // The bracket is central, so the group commutator is exact at every n up
  // to truncation and rounding.
  for (std::size_t n : {2, 8, 32}) {
    CompileConfig cfg;
    cfg.epsilon = 1.0;  // accept the first attempt
    cfg.n_start = n;
    cfg.n_budget = n;
    const CompileResult r = compile(br, 0.5, gens, psi, exact_inverter(), cfg);
    CHECK(std::abs(goal.dot(evolve(r.sequence, psi, gens))) > 0.999);
  }
}

TEST_CASE("budget exhaustion keeps the best attempt", "[synthesizer]") {
  const GeneratorSet gens({op("0.5*q1^2"), op("0.5*p1^2")}, TruncationSpec::uniform(1, 24));
  const StateVector psi = vacuum(*gens.truncation());
  CompileConfig cfg;
  cfg.epsilon = 1e-9;
  cfg.n_budget = 4;
  try {
    (void)compile(parse_generator_expr("[H1, H2]"), 0.5, gens, psi, exact_inverter(), cfg);
    FAIL("expected CompileBudgetExhausted");
  } catch (const CompileBudgetExhausted& e) {
    CHECK(e.best().attempts.size() == 3);
    CHECK(e.best().n > 0);
    CHECK(std::isfinite(e.best().distance));
    for (const auto& a : e.best().attempts) CHECK(e.best().distance <= a.distance);
  }
}

TEST_CASE("physical compilation of a bracket", "[synthesizer]") {
  // Single mode: q^2 + p^2 and the same plus a detuning share a commensurate
  // spectrum, so recurrence inverses are essentially exact.
  const GeneratorSet gens({op("0.5*(q1^2 + p1^2)"), op("q1^2 + p1^2")}, TruncationSpec::uniform(1, 12));
  std::mt19937_64 rng(29);
  const StateVector psi = random_state(*gens.truncation(), rng, 6);
  InverterSpec inv;
  inv.recurrence.delta = 1e-6;
  CompileConfig cfg;
  cfg.epsilon = 1e-6;
  const CompileResult r = compile(parse_generator_expr("[H1, H2]"), 0.5, gens, psi, inv, cfg);
  CHECK(r.sequence.physical());
  for (const auto& s : r.sequence.segments()) CHECK(s.duration >= 0.0);
  CHECK(r.distance < 1e-6);
}

TEST_CASE("reachability reports", "[synthesizer]") {
  const GeneratorSet gens({op("q1"), op("p1"), op("q1^2")}, TruncationSpec::uniform(1, 24));
  const StateVector psi = vacuum(*gens.truncation());
  std::vector<ReachTarget> targets;
  for (std::size_t k = 0; k < 3; ++k) targets.push_back({"H" + std::to_string(k + 1), GeneratorExpr::leaf(k), 0.4});
  targets.push_back({"sum", parse_generator_expr("(H1 + (H2 + H3))"), 0.1});
  targets.push_back({"hard", parse_generator_expr("[H2, H3]"), 0.8});
  ReachabilityConfig cfg;
  cfg.compile.epsilon = 1e-3;
  cfg.compile.n_budget = 128;
  cfg.inverter.exact = true;

  const ReachabilityReport rep = reachability_report(gens, psi, targets, cfg);
  REQUIRE(rep.entries.size() == 5);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(rep.entries[k].success);
    CHECK(rep.entries[k].result.distance < 1e-10);
    CHECK(rep.entries[k].result.inversions == 0);
  }
  CHECK(rep.entries[3].success);

  ReachabilityConfig tiny = cfg;
  tiny.compile.n_budget = 1;
  const ReachabilityReport fail = reachability_report(gens, psi, {targets[4]}, tiny);
  CHECK(fail.failures() == 1);
  CHECK_FALSE(fail.entries[0].error.empty());
  CHECK(fail.entries[0].result.n == 1);
  CHECK(fail.entries[0].result.distance > 1e-3);

  ReachabilityConfig par = cfg;
  par.jobs = 3;
  const ReachabilityReport rep2 = reachability_report(gens, psi, targets, par);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    CHECK(rep2.entries[i].success == rep.entries[i].success);
    CHECK(rep2.entries[i].result.distance == rep.entries[i].result.distance);
    CHECK(rep2.entries[i].result.sequence == rep.entries[i].result.sequence);
  }
}

TEST_CASE("compile rejects bad input", "[synthesizer]") {
  const GeneratorSet gens = qp_system(8);
  const StateVector psi = vacuum(*gens.truncation());
  CHECK_THROWS_AS(compile(GeneratorExpr::leaf(4), 1.0, gens, psi, InverterSpec{}), std::out_of_range);
  CHECK_THROWS_AS(compile(GeneratorExpr::leaf(0), -1.0, gens, psi, InverterSpec{}), std::invalid_argument);
  CHECK_THROWS_AS(compile(GeneratorExpr::leaf(0), 1.0, gens, StateVector(2.0 * psi), InverterSpec{}),
                  std::invalid_argument);
}
