#include <cmath>

#include "catch_amalgamated.hpp"
#include "support/oracles.hpp"

using namespace recurctl;

namespace {

PolyOp op(const char* text, std::size_t modes) { return parse_operator(text, modes); }

bool same(const PolyOp& a, const PolyOp& b) { return max_abs_difference(a, b) < 1e-13; }

ChainSpec detuned_pair(double omega) {
  ChainSpec s = ChainSpec::open_chain(2, omega);
  s.controls = {op("1.5*(q1^2 + p1^2)", 2)};
  return s;
}

const ClosureCaps kCaps{4, 512, 1e-10};

}  // namespace

TEST_CASE("coupling Hamiltonian", "[oscillators]") {
  CHECK(same(coupling_hamiltonian(0, 1, 0.0, 2), op("p1^2 + q1^2 + p2^2 + q2^2", 2)));
  const PolyOp h = coupling_hamiltonian(0, 1, 1.0, 2);
  CHECK(h.coefficient(op("p1 p2", 2).terms().begin()->first) == Complex{-2.0, 0.0});
  CHECK(h.coefficient(op("q1 q2", 2).terms().begin()->first) == Complex{-2.0, 0.0});
  CHECK(h.coefficient(op("q1^2", 2).terms().begin()->first) == Complex{2.0, 0.0});
  CHECK(is_hermitian(h));
  CHECK(same(h, coupling_hamiltonian(1, 0, 1.0, 2)));
  CHECK_THROWS_AS(coupling_hamiltonian(1, 1, 1.0, 2), std::invalid_argument);
}

TEST_CASE("drift", "[oscillators]") {
  CHECK(drift(ChainSpec::open_chain(3, 1.0, 0.0)).is_zero());
  CHECK(same(drift(ChainSpec::open_chain(2, 0.7)), coupling_hamiltonian(0, 1, 0.7, 2)));
  const PolyOp d3 = drift(ChainSpec::open_chain(3, 1.0));
  for (const auto& [m, c] : d3.terms()) CHECK_FALSE((m.touches(0) && m.touches(2)));
  CHECK(d3.coefficient(op("q2^2", 3).terms().begin()->first) == Complex{4.0, 0.0});

  ChainSpec bad = ChainSpec::open_chain(2, 1.0);
  bad.couplings.push_back({1, 0, 1.0});
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ChainSpec::open_chain(2, 1.0);
  bad.control_sites = {5};
  CHECK_THROWS_AS(bad.validate(), std::out_of_range);
}

TEST_CASE("control sets", "[oscillators]") {
  ChainSpec s = ChainSpec::open_chain(2, 1.0);
  s.controls = {op("q1", 2), op("p1", 2), op("q1^3", 2)};
  const auto hs = control_hamiltonian_set(s);
  REQUIRE(hs.size() == 4);
  const PolyOp h0 = drift(s);
  CHECK(same(hs[0], h0));
  for (std::size_t k = 0; k < hs.size(); ++k) {
    CHECK(is_hermitian(hs[k]));
    CHECK_FALSE((hs[k] - h0).touches(1));
  }
  const auto gens = control_system(s);
  REQUIRE(gens.size() == 4);
  for (const auto& g : gens) CHECK(is_skew_hermitian(g, 1e-14));

  CHECK(control_hamiltonians(ChainSpec::open_chain(2, 1.0)).size() == 4);
  ChainSpec capped = ChainSpec::open_chain(2, 1.0);
  capped.control_degree_cap = 2;
  CHECK(control_hamiltonians(capped).size() == 3);
}

TEST_CASE("chain controllability", "[oscillators]") {
  const ChainVerdict two = chain_controllability(ChainSpec::open_chain(2, 1.0), kCaps);
  CHECK(two.overall == Verdict::propagates);
  CHECK(two.unreached.empty());

  const ChainVerdict off = chain_controllability(ChainSpec::open_chain(2, 0.0), kCaps);
  CHECK(off.overall == Verdict::fails);
  CHECK(off.message == "not propagatable to modes {2}");

  const ChainVerdict three = chain_controllability(ChainSpec::open_chain(3, 1.0), kCaps);
  CHECK(three.overall == Verdict::propagates);
  REQUIRE(three.edges.size() == 2);
  CHECK(three.edges[0].from == 0);
  CHECK(three.edges[0].to == 1);
  CHECK(three.edges[1].from == 1);
  CHECK(three.edges[1].to == 2);
}

TEST_CASE("more controls never break propagation", "[oscillators]") {
  const std::vector<std::vector<const char*>> ladders{{"q1"}, {"q1", "p1"}, {"q1", "p1", "q1^2"},
                                                      {"q1", "p1", "q1^2", "q1^3"}};
  bool seen = false;
  for (const auto& names : ladders) {
    ChainSpec s = ChainSpec::open_chain(2, 1.0);
    for (const char* n : names) s.controls.push_back(op(n, 2));
    const Verdict v = chain_controllability(s, kCaps).overall;
    if (seen) CHECK(v == Verdict::propagates);
    seen = seen || v == Verdict::propagates;
  }
  CHECK(seen);
}

TEST_CASE("truncated drift is bounded below", "[oscillators]") {
  ChainDemoConfig cfg;
  cfg.dim_per_mode = 6;
  const GeneratorSet gens = chain_generators(ChainSpec::open_chain(2, 1.0), cfg);
  CHECK(gens.size() == 5);
  for (std::size_t k = 0; k < gens.size(); ++k) CHECK(std::isfinite(gens.at(k).spectrum.eigenvalues(0)));
}

TEST_CASE("chain demo moves an excitation into mode 2", "[oscillators]") {
  const ChainSpec spec = detuned_pair(1.0);
  ChainDemoConfig cfg;
  cfg.dim_per_mode = 8;
  cfg.initial_levels = {1, 0};
  cfg.reach.compile.epsilon = 0.1;
  cfg.reach.inverter.recurrence.delta = 1e-6;
  std::vector<ReachTarget> targets = default_chain_targets(spec, 0.5);
  targets.push_back({"idle", GeneratorExpr::leaf(0), 0.0});
  const ReachabilityReport rep = chain_demo(spec, targets, cfg);
  REQUIRE(rep.entries.size() == 3);
  for (const auto& e : rep.entries) {
    INFO(e.name << ": " << e.error);
    CHECK(e.success);
  }
  for (const auto& e : rep.entries) {
    CHECK(e.result.sequence.physical());
    for (const auto& s : e.result.sequence.segments()) CHECK(s.duration >= 0.0);
  }
  CHECK(rep.entries[2].result.distance == 0.0);

  const GeneratorSet gens = chain_generators(spec, cfg);
  const auto& trunc = *gens.truncation();
  const StateVector psi0 = chain_initial_state(trunc, cfg);
  const StateVector reached = evolve(rep.entries[1].result.sequence, psi0, gens);
  CHECK(std::norm(reached(static_cast<Eigen::Index>(trunc.index({0, 1})))) > 0.9);
}

TEST_CASE("without coupling mode 2 cannot be reached", "[oscillators]") {
  ChainDemoConfig cfg;
  cfg.dim_per_mode = 8;
  cfg.initial_levels = {1, 0};
  cfg.reach.compile.epsilon = 0.1;
  cfg.reach.inverter.recurrence.delta = 1e-6;
  const auto bracket = GeneratorExpr::bracket(GeneratorExpr::leaf(1), GeneratorExpr::leaf(0));

  const GeneratorSet coupled = chain_generators(detuned_pair(1.0), cfg);
  const auto& trunc = *coupled.truncation();
  const StateVector psi0 = chain_initial_state(trunc, cfg);
  const StateVector goal = target_unitary(bracket, 0.5, coupled) * psi0;

  const ChainSpec off = detuned_pair(0.0);
  const ReachabilityReport rep = chain_demo(off, {{"bracket", bracket, 0.5}}, cfg);
  REQUIRE(rep.entries.size() == 1);
  const GeneratorSet decoupled = chain_generators(off, cfg);
  const Verification v = verify(rep.entries[0].result.sequence, psi0, goal, decoupled);
  CHECK(v.distance > cfg.reach.compile.epsilon);
  const StateVector reached = evolve(rep.entries[0].result.sequence, psi0, decoupled);
  CHECK(std::norm(reached(static_cast<Eigen::Index>(trunc.index({0, 1})))) < 1e-12);
}
