#include "catch_amalgamated.hpp"
#include "support/oracles.hpp"

using namespace recurctl;

namespace {

PolyOp op(const char* text, std::size_t modes = 1) { return parse_operator(text, modes); }

}  // namespace

TEST_CASE("small closures", "[lie]") {
  const LieBasis heis = lie_closure({op("i*q1"), op("i*p1")});
  CHECK(heis.dimension() == 3);
  CHECK(heis.saturated);
  CHECK(contains(heis, op("i")));

  const LieBasis sp2 = lie_closure({op("i*q1^2"), op("i*p1^2")});
  CHECK(sp2.dimension() == 3);
  CHECK(sp2.saturated);
  CHECK(contains(sp2, op("i*(q1*p1 + p1*q1)")));
  CHECK_FALSE(contains(sp2, op("i*q1^3")));
  CHECK_FALSE(contains(sp2, op("i*q1")));

  const LieBasis affine = lie_closure({op("i*q1^2"), op("i*p1^2"), op("i*q1")});
  CHECK(affine.dimension() == 6);
  CHECK(affine.saturated);
  for (const char* x : {"i*q1^2", "i*p1^2", "i*(q1 p1 + p1 q1)", "i*q1", "i*p1", "i"}) CHECK(contains(affine, op(x)));
}

TEST_CASE("every generator lies in its own closure", "[lie]") {
  const std::vector<PolyOp> gens{op("i*(q1^2 + p2^2)", 2), op("i*q1 q2", 2)};
  const LieBasis b = lie_closure(gens);
  for (const auto& g : gens) CHECK(contains(b, g));
}

TEST_CASE("caps are reported", "[lie]") {
  const LieBasis cubic = lie_closure({op("i*q1^2"), op("i*p1^2"), op("i*q1^3")}, ClosureCaps{6, 512, 1e-10});
  CHECK_FALSE(cubic.saturated);
  CHECK(cubic.degree_cap_hit);
  const LieBasis small = lie_closure({op("i*q1^2"), op("i*p1^2"), op("i*q1")}, ClosureCaps{8, 4, 1e-10});
  CHECK_FALSE(small.saturated);
  CHECK(small.dim_cap_hit);
  CHECK(small.dimension() <= 4);
}

TEST_CASE("closure matches the matrix closure for the Heisenberg algebra", "[lie]") {
  // At finite D the truncated q, p generate more, but i*1 appears in both.
  const LieBasis heis = lie_closure({op("i*q1"), op("i*p1")});
  const auto spec = TruncationSpec::uniform(1, 6);
  std::vector<Matrix> mats;
  for (const auto& x : heis.basis) mats.push_back(represent(x, spec).matrix);
  CHECK(oracle::matrix_span_dimension(mats) == 3);
}

TEST_CASE("non skew-hermitian generators are rejected", "[lie]") {
  CHECK_THROWS_AS(lie_closure({op("q1")}), std::invalid_argument);
}

TEST_CASE("generating sets", "[lie]") {
  const auto single = single_mode_generators(0, 2, 2);
  CHECK(single.size() == 6);
  for (const auto& g : single) {
    CHECK(is_skew_hermitian(g, 1e-14));
    CHECK_FALSE(g.touches(1));
  }
  const std::size_t both[] = {0, 1};
  CHECK(polynomial_generators(both, 2, 2).size() == 15);
}

TEST_CASE("propagation across one coupling", "[lie]") {
  const PolyOp h12 = op("(q1 - q2)^2 + (p1 - p2)^2 + q1^2 + p1^2 + q2^2 + p2^2", 2);
  const auto local_gens = single_mode_generators(0, 2, 3);
  const LieBasis local = lie_closure(std::span<const PolyOp>(local_gens), ClosureCaps{3, 512, 1e-10});

  const PropagationResult yes = algebraic_propagation_check(local, h12, ClosureCaps{3, 512, 1e-10});
  CHECK(yes.verdict == Verdict::propagates);
  CHECK(contains(yes.closure, op("i*q2", 2)));
  CHECK(contains(yes.closure, op("i*p2", 2)));
  CHECK(contains(yes.closure, op("i*q2^2", 2)));

  const PropagationResult no = algebraic_propagation_check(local, PolyOp(2), ClosureCaps{3, 512, 1e-10});
  CHECK(no.verdict == Verdict::fails);
  CHECK(no.closure.dimension() == local.dimension());
}

TEST_CASE("quadratic-free local algebra gives an honest verdict", "[lie]") {
  const PolyOp h12 = op("(q1 - q2)^2 + (p1 - p2)^2 + q1^2 + p1^2 + q2^2 + p2^2", 2);
  const LieBasis local = lie_closure({op("i*q1", 2), op("i*p1", 2)});
  const PropagationResult r = algebraic_propagation_check(local, h12, ClosureCaps{3, 512, 1e-10});
  // The quadratic coupling only moves q1, p1 into linear combinations with
  // q2, p2; the linear span cannot reach i*q2^2.
  CHECK(r.verdict != Verdict::propagates);
  CHECK_FALSE(r.reason.empty());
}
