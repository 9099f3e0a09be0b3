#pragma once

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include "recurctl/fock.hpp"

namespace recurctl {

/// Eigen-decomposition of a hermitian Hamiltonian. Eigenvalues are stored
/// ascending and shifted by max(0, -E_min) so that E_0 >= 0.
struct SpectralData {
  RealVector eigenvalues;
  Matrix eigenvectors;
  double shift = 0.0;

  Eigen::Index size() const { return eigenvalues.size(); }

  /// Eigenvalues of the unshifted operator.
  RealVector physical_eigenvalues() const {
    return (eigenvalues.array() - shift).matrix();
  }
};

inline constexpr double kHermiticityTolerance = 1e-8;

inline SpectralData spectral(const Matrix& hermitian) {
  if (hermitian.rows() != hermitian.cols()) throw std::invalid_argument("spectral: matrix is not square");
  const double defect = max_abs_entry(hermitian - hermitian.adjoint());
  if (defect > kHermiticityTolerance) {
    throw std::invalid_argument("spectral: hermiticity defect " + std::to_string(defect) +
                                " exceeds tolerance");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian);
  if (solver.info() != Eigen::Success) throw std::runtime_error("spectral: eigensolver failed");
  SpectralData out;
  out.eigenvectors = solver.eigenvectors();
  out.eigenvalues = solver.eigenvalues();
  const double emin = out.eigenvalues.size() ? out.eigenvalues(0) : 0.0;
  out.shift = std::max(0.0, -emin);
  out.eigenvalues.array() += out.shift;
  return out;
}

inline SpectralData spectral(const TruncatedRep& hamiltonian) {
  if (hamiltonian.hermiticity_defect > kHermiticityTolerance) {
    throw std::invalid_argument("spectral: representation is not hermitian");
  }
  return spectral(hamiltonian.matrix);
}

/// Spectral data for an explicitly given diagonal spectrum in the standard basis.
inline SpectralData diagonal_spectral(const RealVector& energies) {
  Matrix h = Matrix::Zero(energies.size(), energies.size());
  for (Eigen::Index i = 0; i < energies.size(); ++i) h(i, i) = energies(i);
  return spectral(h);
}

/// FNV-1a over the bit patterns of the (shifted) eigenvalues.
inline std::string spectrum_hash(const RealVector& eigenvalues) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    const double v = eigenvalues(i);
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace recurctl
