#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace chernbraid {

using cdouble = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

/// Continuous position in units of the lattice constant.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Plaquette addressed by its lower-left site.
struct Plaquette {
  int x = 0;
  int y = 0;

  friend bool operator==(const Plaquette&, const Plaquette&) = default;
};

/// Extra flux threaded through a set of plaquettes, shared equally among them.
struct DefectFlux {
  std::vector<Plaquette> plaquettes;
  double total = 0.0;  // delta Phi, in flux quanta

  double per_plaquette() const {
    return plaquettes.empty() ? 0.0 : total / static_cast<double>(plaquettes.size());
  }
  bool contains(Plaquette p) const;

  /// The 2x2 plaquette block around the lattice center (fewer on lattices
  /// narrower than three sites).
  static DefectFlux central(int Lx, int Ly, double total);
};

/// Geometry and flux content of an open-boundary square lattice.
///
/// Energies are in units of the hopping J. Sites are indexed x + Lx * y.
struct LatticeSpec {
  int Lx = 2;
  int Ly = 2;
  double alpha = 0.0;  // background flux per plaquette
  DefectFlux defect;

  static LatticeSpec make(int Lx, int Ly, double alpha, double delta_phi = 0.0);

  int sites() const { return Lx * Ly; }
  int index(int x, int y) const { return x + Lx * y; }
  Vec2 position(int site) const {
    return {static_cast<double>(site % Lx), static_cast<double>(site / Lx)};
  }
  /// Geometric center; for odd sizes this is the central site.
  Vec2 center() const { return {(Lx - 1) / 2.0, (Ly - 1) / 2.0}; }

  /// Target flux (alpha, plus the defect share where present) through a plaquette.
  double flux(Plaquette p) const;

  /// Checks ranges and finiteness; reduces alpha into [0, 1) with a warning.
  /// Throws InvalidArgument.
  LatticeSpec validated() const;
};

/// Gaussian pinning potential V * exp(-|r - R|^2 / 2 sigma^2).
struct PinSpec {
  Vec2 center;
  double strength = 0.0;  // negative attracts particles
  double width = 1.0;

  double potential_at(Vec2 r) const;
};

/// Dense single-particle Hamiltonian together with the geometry it was built on.
class HamiltonianMatrix {
 public:
  HamiltonianMatrix(int Lx, int Ly, ComplexMatrix m) : Lx_(Lx), Ly_(Ly), m_(std::move(m)) {}

  const ComplexMatrix& matrix() const { return m_; }
  int Lx() const { return Lx_; }
  int Ly() const { return Ly_; }
  int dim() const { return static_cast<int>(m_.rows()); }

  /// Conjugation by diag(exp(i chi)): same physics, different gauge.
  HamiltonianMatrix gauge_transformed(const RealVector& chi) const;

 private:
  int Lx_;
  int Ly_;
  ComplexMatrix m_;
};

/// Hopping with Peierls phases realizing spec.flux() on every plaquette, plus
/// the on-site pin potentials. Open boundaries.
///
/// Phases live on vertical links only: (x, y) -> (x, y + 1) carries
/// 2 pi * sum_{x' < x} flux(x', y), which reduces to exp(i 2 pi alpha x) in the
/// homogeneous case.
HamiltonianMatrix build_hamiltonian(const LatticeSpec& spec, std::span<const PinSpec> pins = {});

/// Flux through a plaquette reconstructed from the link phases of H, in (-1/2, 1/2].
double plaquette_flux(const HamiltonianMatrix& H, Plaquette p);

}  // namespace chernbraid
