#pragma once

// Dense matrix representations of PolyOps in a truncated tensor-product
// Fock basis. Basis index = sum_i n_i * stride_i with mode 0 most significant.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "recurctl/weyl.hpp"

namespace recurctl {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

/// Amplitudes in the truncated Fock basis; physical states have unit norm.
using StateVector = Vector;

inline constexpr std::size_t kDefaultMaxDimension = 4096;

struct TruncationSpec {
  std::vector<std::size_t> dims;
  std::size_t buffer = 0;

  TruncationSpec() = default;
  TruncationSpec(std::vector<std::size_t> per_mode, std::size_t buffer_levels = 0)
      : dims(std::move(per_mode)), buffer(buffer_levels) {
    validate();
  }

  static TruncationSpec uniform(std::size_t modes, std::size_t dim, std::size_t buffer_levels = 0) {
    return TruncationSpec(std::vector<std::size_t>(modes, dim), buffer_levels);
  }

  void validate() const {
    if (dims.empty()) throw std::invalid_argument("TruncationSpec: no modes");
    for (std::size_t d : dims) {
      if (d < 2) throw std::invalid_argument("TruncationSpec: per-mode dimension must be >= 2");
    }
    if (buffer >= *std::min_element(dims.begin(), dims.end())) {
      throw std::invalid_argument("TruncationSpec: buffer must be smaller than every mode dimension");
    }
  }

  std::size_t mode_count() const { return dims.size(); }

  std::size_t total() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t stride(std::size_t mode) const {
    std::size_t s = 1;
    for (std::size_t m = mode + 1; m < dims.size(); ++m) s *= dims[m];
    return s;
  }

  std::vector<std::size_t> levels(std::size_t index) const {
    std::vector<std::size_t> out(dims.size());
    for (std::size_t m = dims.size(); m-- > 0;) {
      out[m] = index % dims[m];
      index /= dims[m];
    }
    return out;
  }

  std::size_t index(const std::vector<std::size_t>& levels) const {
    if (levels.size() != dims.size()) throw std::invalid_argument("TruncationSpec: level count mismatch");
    std::size_t out = 0;
    for (std::size_t m = 0; m < dims.size(); ++m) {
      if (levels[m] >= dims[m]) throw std::out_of_range("TruncationSpec: level beyond cutoff");
      out = out * dims[m] + levels[m];
    }
    return out;
  }

  /// True if every mode's level is below D_i - buffer.
  bool interior(std::size_t index, std::size_t buffer_levels) const {
    const auto lv = levels(index);
    for (std::size_t m = 0; m < dims.size(); ++m) {
      if (lv[m] + buffer_levels >= dims[m]) return false;
    }
    return true;
  }

  bool operator==(const TruncationSpec&) const = default;
};

inline std::vector<Eigen::Index> interior_indices(const TruncationSpec& spec, std::size_t buffer_levels) {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < spec.total(); ++i) {
    if (spec.interior(i, buffer_levels)) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

/// Max entry magnitude of a - b on rows and columns inside the buffer.
inline double interior_max_difference(const Matrix& a, const Matrix& b, const TruncationSpec& spec,
                                      std::size_t buffer_levels) {
  const auto idx = interior_indices(spec, buffer_levels);
  double out = 0.0;
  for (auto i : idx) {
    for (auto j : idx) out = std::max(out, std::abs(a(i, j) - b(i, j)));
  }
  return out;
}

inline Matrix local_annihilation(std::size_t dim) {
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t n = 1; n < dim; ++n) {
    a(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(n)) = std::sqrt(static_cast<double>(n));
  }
  return a;
}

inline Matrix local_position(std::size_t dim) {
  const Matrix a = local_annihilation(dim);
  return (a + a.adjoint()) / std::sqrt(2.0);
}

inline Matrix local_momentum(std::size_t dim) {
  const Matrix a = local_annihilation(dim);
  return Complex{0.0, 1.0} * (a.adjoint() - a) / std::sqrt(2.0);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Embeds per-mode local operators as op_0 (x) op_1 (x) ...
inline Matrix embed_local(const std::vector<Matrix>& per_mode) {
  Matrix out = per_mode.front();
  for (std::size_t m = 1; m < per_mode.size(); ++m) out = kron(out, per_mode[m]);
  return out;
}

struct LadderSet {
  std::vector<Matrix> annihilators;
  std::vector<Matrix> creators;
};

inline LadderSet ladder_matrices(const TruncationSpec& spec) {
  spec.validate();
  LadderSet out;
  for (std::size_t mode = 0; mode < spec.mode_count(); ++mode) {
    std::vector<Matrix> factors;
    for (std::size_t m = 0; m < spec.mode_count(); ++m) {
      const auto d = static_cast<Eigen::Index>(spec.dims[m]);
      factors.push_back(m == mode ? local_annihilation(spec.dims[m]) : Matrix(Matrix::Identity(d, d)));
    }
    Matrix a = embed_local(factors);
    out.creators.push_back(a.adjoint());
    out.annihilators.push_back(std::move(a));
  }
  return out;
}

inline double max_abs_entry(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

struct Hermitized {
  Matrix matrix;
  double defect = 0.0;
};

/// (M + M^dagger)/2 and the defect max|M - M^dagger| of the input.
inline Hermitized hermitize(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("hermitize: matrix is not square");
  Hermitized out;
  out.defect = max_abs_entry(m - m.adjoint());
  out.matrix = (m + m.adjoint()) / 2.0;
  return out;
}

/// (M - M^dagger)/2 and the defect max|M + M^dagger| of the input.
inline Hermitized skew_hermitize(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("skew_hermitize: matrix is not square");
  Hermitized out;
  out.defect = max_abs_entry(m + m.adjoint());
  out.matrix = (m - m.adjoint()) / 2.0;
  return out;
}

struct TruncatedRep {
  Matrix matrix;
  TruncationSpec spec;
  PolyOp source;
  /// max|M - M^dagger| of the stored matrix (hermitian role) or
  /// max|M + M^dagger| (skew-hermitian role).
  double hermiticity_defect = 0.0;
  /// Same defect measured before symmetrization.
  double raw_defect = 0.0;
};

/// Substitutes truncated q_i, p_i into each canonical monomial and sums.
/// Hermitian-role sources are hermitized, skew-hermitian ones skew-hermitized.
inline TruncatedRep represent(const PolyOp& a, const TruncationSpec& spec,
                              std::size_t max_dimension = kDefaultMaxDimension) {
  spec.validate();
  if (a.mode_count() != spec.mode_count()) {
    throw std::invalid_argument("represent: operator has " + std::to_string(a.mode_count()) +
                                " modes, truncation has " + std::to_string(spec.mode_count()));
  }
  const std::size_t total = spec.total();
  if (total > max_dimension) {
    throw std::length_error("represent: dimension " + std::to_string(total) + " exceeds maximum " +
                            std::to_string(max_dimension));
  }

  // Per-mode powers q^a and p^b, computed lazily.
  std::vector<std::vector<Matrix>> q_pows(spec.mode_count()), p_pows(spec.mode_count());
  auto power = [&](std::vector<Matrix>& cache, const Matrix& base, unsigned k) -> const Matrix& {
    if (cache.empty()) cache.push_back(Matrix::Identity(base.rows(), base.cols()));
    while (cache.size() <= k) cache.push_back(cache.back() * base);
    return cache[k];
  };
  std::vector<Matrix> q_local, p_local;
  for (std::size_t d : spec.dims) {
    q_local.push_back(local_position(d));
    p_local.push_back(local_momentum(d));
  }

  const auto n = static_cast<Eigen::Index>(total);
  TruncatedRep out;
  out.spec = spec;
  out.source = a;
  out.matrix = Matrix::Zero(n, n);
  for (const auto& [mono, coeff] : a.terms()) {
    std::vector<Matrix> factors;
    factors.reserve(spec.mode_count());
    for (std::size_t m = 0; m < spec.mode_count(); ++m) {
      const auto [qa, pb] = mono.powers(m);
      factors.push_back(power(q_pows[m], q_local[m], qa) * power(p_pows[m], p_local[m], pb));
    }
    out.matrix += coeff * embed_local(factors);
  }

  if (a.role() == Role::hermitian) {
    auto h = hermitize(out.matrix);
    out.raw_defect = h.defect;
    out.matrix = std::move(h.matrix);
    out.hermiticity_defect = max_abs_entry(out.matrix - out.matrix.adjoint());
  } else if (a.role() == Role::skew_hermitian) {
    auto h = skew_hermitize(out.matrix);
    out.raw_defect = h.defect;
    out.matrix = std::move(h.matrix);
    out.hermiticity_defect = max_abs_entry(out.matrix + out.matrix.adjoint());
  } else {
    out.raw_defect = max_abs_entry(out.matrix - out.matrix.adjoint());
    out.hermiticity_defect = out.raw_defect;
  }
  return out;
}

/// Zero-pads a state from `small` into the larger per-mode truncation.
inline StateVector embed(const StateVector& psi, const TruncationSpec& small, const TruncationSpec& large) {
  if (small.mode_count() != large.mode_count()) throw std::invalid_argument("embed: mode count mismatch");
  for (std::size_t m = 0; m < small.mode_count(); ++m) {
    if (small.dims[m] > large.dims[m]) throw std::invalid_argument("embed: target truncation is smaller");
  }
  if (static_cast<std::size_t>(psi.size()) != small.total()) {
    throw std::invalid_argument("embed: state length does not match truncation");
  }
  StateVector out = StateVector::Zero(static_cast<Eigen::Index>(large.total()));
  for (std::size_t i = 0; i < small.total(); ++i) {
    out(static_cast<Eigen::Index>(large.index(small.levels(i)))) = psi(static_cast<Eigen::Index>(i));
  }
  return out;
}

/// ||A_large psi_embedded - embed(A_small psi)||: how much the action of A on
/// psi still changes when the cutoff is raised.
inline double truncation_probe(const PolyOp& a, const StateVector& psi, const TruncationSpec& small,
                               const TruncationSpec& large) {
  const TruncatedRep rs = represent(a.with_role(Role::general), small);
  const TruncatedRep rl = represent(a.with_role(Role::general), large);
  const StateVector lhs = rl.matrix * embed(psi, small, large);
  const StateVector rhs = embed(rs.matrix * psi, small, large);
  return (lhs - rhs).norm();
}

inline StateVector fock_state(const TruncationSpec& spec, const std::vector<std::size_t>& levels) {
  StateVector out = StateVector::Zero(static_cast<Eigen::Index>(spec.total()));
  out(static_cast<Eigen::Index>(spec.index(levels))) = 1.0;
  return out;
}

inline StateVector vacuum(const TruncationSpec& spec) {
  return fock_state(spec, std::vector<std::size_t>(spec.mode_count(), 0));
}

/// Product of truncated coherent states, renormalized after truncation.
inline StateVector coherent_state(const TruncationSpec& spec, const std::vector<Complex>& alphas) {
  if (alphas.size() != spec.mode_count()) throw std::invalid_argument("coherent_state: one amplitude per mode");
  std::vector<Matrix> locals;
  for (std::size_t m = 0; m < spec.mode_count(); ++m) {
    const auto d = static_cast<Eigen::Index>(spec.dims[m]);
    Matrix v(d, 1);
    Complex amp = std::exp(-0.5 * std::norm(alphas[m]));
    for (Eigen::Index n = 0; n < d; ++n) {
      v(n, 0) = amp;
      amp *= alphas[m] / std::sqrt(static_cast<double>(n + 1));
    }
    locals.push_back(std::move(v));
  }
  Matrix full = embed_local(locals);
  StateVector out = full.col(0);
  return out / out.norm();
}

/// Random normalized state supported on levels < max_level in every mode.
template <typename Rng>
StateVector random_state(const TruncationSpec& spec, Rng& rng, std::size_t max_level) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  StateVector out = StateVector::Zero(static_cast<Eigen::Index>(spec.total()));
  for (std::size_t i = 0; i < spec.total(); ++i) {
    const auto lv = spec.levels(i);
    const bool inside = std::all_of(lv.begin(), lv.end(), [&](std::size_t n) { return n < max_level; });
    if (!inside) continue;
    const double re = gauss(rng);
    const double im = gauss(rng);
    out(static_cast<Eigen::Index>(i)) = Complex{re, im};
  }
  return out / out.norm();
}

inline bool is_normalized(const StateVector& psi, double tol = 1e-12) {
  return std::abs(psi.norm() - 1.0) <= tol;
}

/// Writes `<stem>.bin` (column-major little-endian (re, im) doubles) and a
/// JSON sidecar `<stem>.json`. The sidecar text is supplied by the caller so
/// this header stays free of the JSON dependency.
inline void write_matrix_binary(const Matrix& m, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_matrix_binary: cannot open " + tmp.string());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double pair[2] = {m(i, j).real(), m(i, j).imag()};
        os.write(reinterpret_cast<const char*>(pair), sizeof(pair));
      }
    }
    if (!os) throw std::runtime_error("write_matrix_binary: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Matrix read_matrix_binary(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_matrix_binary: cannot open " + path.string());
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      double pair[2];
      is.read(reinterpret_cast<char*>(pair), sizeof(pair));
      if (!is) throw std::runtime_error("read_matrix_binary: truncated file " + path.string());
      m(i, j) = Complex{pair[0], pair[1]};
    }
  }
  return m;
}

}  // namespace recurctl
