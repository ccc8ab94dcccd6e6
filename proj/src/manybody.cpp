#include "chernbraid/manybody.hpp"

#include <lapacke.h>

#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "chernbraid/errors.hpp"

namespace chernbraid {

namespace {

constexpr int kEdgeMargin = 2;
// Bulk weight, relative to a uniform state, above which a level counts as bulk.
constexpr double kBulkWeightFloor = 0.5;

lapack_complex_double* as_lapack(cdouble* p) { return reinterpret_cast<lapack_complex_double*>(p); }

SlaterState slater_from(const ComplexMatrix& h, int N) {
  const int n = static_cast<int>(h.rows());
  if (N < 1 || N > n)
    throw InvalidArgument("particle number " + std::to_string(N) + " outside [1, " +
                          std::to_string(n) + "]");
  const int wanted = std::min(N + 1, n);
  Eigenpairs ep = lowest_eigenpairs(h, wanted);
  SlaterState s;
  s.gap = N < n ? ep.values[N] - ep.values[N - 1] : std::numeric_limits<double>::infinity();
  if (s.gap < kDegeneracyTolerance) throw GroundStateDegenerate(s.gap);
  s.orbitals = ep.vectors.leftCols(N);
  s.energies = ep.values.head(N);
  return s;
}

}  // namespace

Eigenpairs lowest_eigenpairs(const ComplexMatrix& hermitian, int count) {
  const int n = static_cast<int>(hermitian.rows());
  if (hermitian.cols() != n) throw InvalidArgument("matrix is not square");
  if (count < 0 || count > n) count = n;
  Eigenpairs out;
  if (n == 0 || count == 0) return out;

  ComplexMatrix a = hermitian;  // destroyed by LAPACK
  RealVector w(n);
  ComplexMatrix z(n, count);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_zheevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, as_lapack(a.data()),
                                         n, 0.0, 0.0, 1, count, 0.0, &found, w.data(),
                                         as_lapack(z.data()), n, support.data());
  if (info != 0 || found != count)
    throw Error("zheevr failed (info " + std::to_string(info) + ")");
  out.values = w.head(count);
  out.vectors = std::move(z);
  return out;
}

SlaterState ground_slater(const HamiltonianMatrix& H, int N) { return slater_from(H.matrix(), N); }

DensityField density(const SlaterState& state) {
  return state.orbitals.cwiseAbs2().rowwise().sum();
}

BandProjector lowest_band_projector(const HamiltonianMatrix& H_free) {
  const Eigenpairs all = lowest_eigenpairs(H_free.matrix());
  const int n = static_cast<int>(all.values.size());
  const int Lx = H_free.Lx(), Ly = H_free.Ly();

  // Sites at least kEdgeMargin away from the boundary count as bulk.
  std::vector<int> bulk;
  for (int y = kEdgeMargin; y < Ly - kEdgeMargin; ++y)
    for (int x = kEdgeMargin; x < Lx - kEdgeMargin; ++x) bulk.push_back(x + Lx * y);
  if (bulk.empty()) throw NoBandGap("lattice too small to separate bulk from edge");
  const double uniform = static_cast<double>(bulk.size()) / n;

  // Bulk levels in the low part of the spectrum; edge modes filling the gap are skipped.
  std::vector<int> levels;
  const int window = static_cast<int>(0.4 * n);
  for (int k = 0; k < window; ++k) {
    double w = 0.0;
    for (int site : bulk) w += std::norm(all.vectors(site, k));
    if (w >= kBulkWeightFloor * uniform) levels.push_back(k);
  }
  if (levels.size() < 3) throw NoBandGap("too few bulk levels to identify a band");

  std::size_t below = 0;
  double largest = -1.0;
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    const double g = all.values[levels[i + 1]] - all.values[levels[i]];
    if (g > largest) {
      largest = g;
      below = i;
    }
  }
  const double mean_spacing =
      (all.values[levels.back()] - all.values[levels.front()]) / static_cast<double>(levels.size() - 1);
  if (!(largest >= 10.0 * mean_spacing))
    throw NoBandGap("largest bulk gap " + std::to_string(largest) + " is below ten mean spacings (" +
                    std::to_string(mean_spacing) + ")");

  const double mid = 0.5 * (all.values[levels[below]] + all.values[levels[below + 1]]);
  int M = 0;
  while (M < n && all.values[M] < mid) ++M;

  BandProjector p;
  p.basis = all.vectors.leftCols(M);
  p.band_energies = all.values.head(M);
  p.gap_lower = all.values[levels[below]];
  p.gap_upper = all.values[levels[below + 1]];
  return p;
}

SlaterState ground_slater_projected(const HamiltonianMatrix& H, const BandProjector& P, int N) {
  if (P.basis.rows() != H.dim()) throw InvalidArgument("projector does not match Hamiltonian");
  if (N > P.dimension())
    throw InvalidArgument("particle number exceeds band dimension " + std::to_string(P.dimension()));
  const ComplexMatrix reduced = P.basis.adjoint() * H.matrix() * P.basis;
  SlaterState s = slater_from(0.5 * (reduced + reduced.adjoint()), N);
  s.orbitals = P.basis * s.orbitals;
  return s;
}

}  // namespace chernbraid
