#include <cmath>
#include <filesystem>
#include <algorithm>
#include <random>

#include "catch_amalgamated.hpp"
#include "support/oracles.hpp"

using namespace recurctl;

namespace {

PolyOp op(const char* text, std::size_t modes = 1) { return parse_operator(text, modes); }

}  // namespace

TEST_CASE("ladder matrices", "[fock]") {
  const Matrix q = local_position(2);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(q(0, 0)) == 0.0);
  CHECK(std::abs(q(0, 1) - r) < 1e-15);
  CHECK(std::abs(q(1, 0) - r) < 1e-15);
  CHECK(std::abs(q(1, 1)) == 0.0);

  const Matrix a = local_annihilation(6);
  const Matrix n = a.adjoint() * a;
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index j = 0; j < 6; ++j) CHECK(std::abs(n(i, j) - (i == j ? double(i) : 0.0)) < 1e-14);
  }
}

TEST_CASE("interior CCR and the boundary artifact", "[fock]") {
  const std::size_t d = 10;
  const Matrix c = local_position(d) * local_momentum(d) - local_momentum(d) * local_position(d);
  const Matrix id = Matrix::Identity(d, d) * kI;
  const Eigen::Index m = static_cast<Eigen::Index>(d) - 1;
  CHECK(max_abs_entry((c - id).topLeftCorner(m, m)) < 1e-12);
  CHECK(std::abs(c(m, m) - kI) > 1.0);
}

TEST_CASE("identity and scalars", "[fock]") {
  const auto spec = TruncationSpec::uniform(2, 3);
  const TruncatedRep r = represent(PolyOp::identity(2, Complex{2.5, -1.0}), spec);
  CHECK(max_abs_entry(r.matrix - Matrix::Identity(9, 9) * Complex{2.5, -1.0}) < 1e-15);
}

TEST_CASE("harmonic spectrum away from the cutoff", "[fock]") {
  // Truncated q^2 + p^2 is diagonal with 2n + 1 for n < D - 1 and D - 1 on
  // the top level, so one boundary eigenvalue (D - 1) / 2 sits inside the
  // physical range. Every interior eigenvector carries n + 1/2.
  const std::size_t d = 16;
  const auto spec = TruncationSpec::uniform(1, d);
  const TruncatedRep r = represent(op("0.5*(p1^2 + q1^2)"), spec);
  CHECK(r.hermiticity_defect < 1e-14);
  const SpectralData sd = spectral(r);
  std::vector<double> interior;
  int boundary = 0;
  for (Eigen::Index k = 0; k < sd.size(); ++k) {
    Eigen::Index level = 0;
    sd.eigenvectors.col(k).cwiseAbs().maxCoeff(&level);
    if (level == static_cast<Eigen::Index>(d) - 1) {
      ++boundary;
      CHECK(std::abs(sd.eigenvalues(k) - 0.5 * double(d - 1)) < 1e-9);
    } else {
      CHECK(std::abs(sd.eigenvalues(k) - (double(level) + 0.5)) < 1e-9);
      interior.push_back(sd.eigenvalues(k));
    }
  }
  CHECK(boundary == 1);
  REQUIRE(interior.size() == d - 1);
  std::sort(interior.begin(), interior.end());
  for (int n = 0; n <= 12; ++n) CHECK(std::abs(interior[static_cast<std::size_t>(n)] - (n + 0.5)) < 1e-9);
}

TEST_CASE("symbolic brackets match matrix commutators on the interior", "[fock]") {
  std::mt19937_64 rng(21);
  const auto spec = TruncationSpec::uniform(2, 12);
  for (int trial = 0; trial < 10; ++trial) {
    const PolyOp a = oracle::random_polyop(rng, 2, 3, 3);
    const PolyOp b = oracle::random_polyop(rng, 2, 3, 3);
    const Matrix ma = represent(a, spec).matrix, mb = represent(b, spec).matrix;
    const Matrix lhs = represent(bracket(a, b), spec).matrix;
    const std::size_t buffer = a.degree() + b.degree();
    CHECK(interior_max_difference(lhs, ma * mb - mb * ma, spec, buffer) < 1e-8);
  }
}

TEST_CASE("canonical and raw forms give the same interior matrix", "[fock]") {
  const auto spec = TruncationSpec::uniform(1, 24);
  const Matrix raw = local_momentum(24) * local_position(24) * local_position(24);
  const Matrix canon = represent(op("p1*q1^2"), spec).matrix;
  CHECK(interior_max_difference(raw, canon, spec, 8) < 1e-9);
}

TEST_CASE("represent is real-linear", "[fock]") {
  const auto spec = TruncationSpec::uniform(2, 5);
  const PolyOp a = op("q1 p2 + i*q2^2", 2), b = op("p1^3 - q1 q2", 2);
  const double alpha = 0.7, beta = -1.9;
  const Matrix lhs = represent(a * Complex{alpha, 0.0} + b * Complex{beta, 0.0}, spec).matrix;
  const Matrix rhs = alpha * represent(a, spec).matrix + beta * represent(b, spec).matrix;
  CHECK(max_abs_entry(lhs - rhs) < 1e-12);
}

TEST_CASE("roles decide symmetrization", "[fock]") {
  const auto spec = TruncationSpec::uniform(1, 8);
  const TruncatedRep h = represent(op("q1^2 p1^2 + p1^2 q1^2"), spec);
  CHECK(h.source.role() == Role::hermitian);
  CHECK(h.hermiticity_defect < 1e-14);
  const TruncatedRep g = represent(op("i*q1^3"), spec);
  CHECK(max_abs_entry(g.matrix + g.matrix.adjoint()) < 1e-14);
}

TEST_CASE("truncation probe", "[fock]") {
  const auto small = TruncationSpec::uniform(1, 8), large = TruncationSpec::uniform(1, 16);
  CHECK(truncation_probe(op("q1"), vacuum(small), small, large) < 1e-12);
  CHECK(truncation_probe(PolyOp::identity(1), coherent_state(small, {Complex{2.0, 0.0}}), small, large) == 0.0);
  CHECK(truncation_probe(op("q1"), coherent_state(small, {Complex{2.0, 0.0}}), small, large) > 1e-3);
}

TEST_CASE("truncation spec indexing", "[fock]") {
  const TruncationSpec spec({3, 4, 2});
  CHECK(spec.total() == 24);
  for (std::size_t i = 0; i < spec.total(); ++i) CHECK(spec.index(spec.levels(i)) == i);
  CHECK(spec.levels(spec.index({2, 1, 1})) == std::vector<std::size_t>{2, 1, 1});
  CHECK_THROWS_AS(TruncationSpec::uniform(1, 4, 4).validate(), std::invalid_argument);
  CHECK_THROWS_AS(represent(op("q1"), TruncationSpec::uniform(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(represent(op("q1", 2), TruncationSpec::uniform(2, 80)), std::length_error);
}

TEST_CASE("states", "[fock]") {
  const auto spec = TruncationSpec::uniform(2, 6);
  std::mt19937_64 rng(3);
  const StateVector r = random_state(spec, rng, 3);
  CHECK(is_normalized(r));
  for (std::size_t i = 0; i < spec.total(); ++i) {
    const auto lv = spec.levels(i);
    if (lv[0] >= 3 || lv[1] >= 3) CHECK(r(static_cast<Eigen::Index>(i)) == Complex{});
  }
  CHECK(is_normalized(coherent_state(spec, {Complex{0.5, 0.1}, Complex{-0.3, 0.0}})));
  CHECK(fock_state(spec, {1, 2})(static_cast<Eigen::Index>(spec.index({1, 2}))) == Complex{1.0, 0.0});
}

TEST_CASE("binary matrix round trip", "[fock]") {
  const auto path = std::filesystem::temp_directory_path() / "recurctl_test_matrix.bin";
  const Matrix m = represent(op("q1 + i*p1^2"), TruncationSpec::uniform(1, 5)).matrix;
  write_matrix_binary(m, path);
  CHECK(read_matrix_binary(path, 5, 5) == m);
  std::filesystem::remove(path);
}
