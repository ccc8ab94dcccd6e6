#pragma once

#include <limits>

#include "chernbraid/lattice.hpp"

namespace chernbraid {

/// Minimal N/N+1 gap (units of J) below which a ground state is rejected.
inline constexpr double kDegeneracyTolerance = 1e-8;

/// Ground state of N non-interacting fermions: the N lowest orbitals as columns.
struct SlaterState {
  ComplexMatrix orbitals;   // sites x N, orthonormal columns
  RealVector energies;      // ascending, length N
  double gap = std::numeric_limits<double>::infinity();  // eps_{N+1} - eps_N

  int particles() const { return static_cast<int>(orbitals.cols()); }
  int sites() const { return static_cast<int>(orbitals.rows()); }
  double total_energy() const { return energies.sum(); }
};

/// Site occupations <n_r>.
using DensityField = RealVector;

/// Orthonormal basis of the lowest band of a pin-free Hamiltonian.
struct BandProjector {
  ComplexMatrix basis;  // sites x M
  RealVector band_energies;
  double gap_lower = 0.0;  // highest bulk level of the band
  double gap_upper = 0.0;  // lowest bulk level above it

  int dimension() const { return static_cast<int>(basis.cols()); }
};

/// Eigen-decomposition of a Hermitian matrix, lowest `count` pairs (all if count < 0).
struct Eigenpairs {
  RealVector values;
  ComplexMatrix vectors;
};
Eigenpairs lowest_eigenpairs(const ComplexMatrix& hermitian, int count = -1);

/// N lowest orbitals of H. Accepts N == dim (gap reported as +inf).
/// Throws GroundStateDegenerate when the N/N+1 gap is below kDegeneracyTolerance.
SlaterState ground_slater(const HamiltonianMatrix& H, int N);

DensityField density(const SlaterState& state);

/// Lowest band of H_free. The gap is located among bulk levels (eigenstates
/// whose weight two or more sites away from the boundary is at least half
/// that of a uniform state) in the lowest 40 % of the spectrum, so that edge
/// modes crossing it do not hide it. Every eigenstate below mid-gap, edge
/// modes included, belongs to the band. Throws NoBandGap when the largest
/// bulk gap is smaller than ten mean bulk level spacings.
BandProjector lowest_band_projector(const HamiltonianMatrix& H_free);

/// Ground state of P^dagger H P, lifted back to the site basis.
SlaterState ground_slater_projected(const HamiltonianMatrix& H, const BandProjector& P, int N);

}  // namespace chernbraid
