// Library results against brute-force Fock-space calculations.
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "chernbraid/analysis.hpp"
#include "chernbraid/geomphase.hpp"
#include "fock_oracle.hpp"
#include "loop_oracle.hpp"

using namespace chernbraid;

namespace {

using oracle::Loop;

double library_phase(const Loop& c) {
  const PinSpec pin{{0.0, 0.0}, c.V, c.sigma};
  if (c.exchange) return run_exchange(c.spec, pin, c.R, c.n_steps, c.N).phi_mod;
  PathPlan path;
  path.center = c.spec.center();
  path.radius = c.R;
  path.n_steps = c.n_steps;
  return sweep(c.spec, pin, path, c.N).phi_mod;
}

}  // namespace

TEST_CASE("Slater overlap equals the Fock-space inner product") {
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  oracle::FockSpace fock(6, 2);
  for (int t = 0; t < 20; ++t) {
    SlaterState a, b;
    a.orbitals = ComplexMatrix(6, 2);
    b.orbitals = ComplexMatrix(6, 2);
    for (int i = 0; i < 6; ++i)
      for (int k = 0; k < 2; ++k) {
        a.orbitals(i, k) = {g(rng), g(rng)};
        b.orbitals(i, k) = {g(rng), g(rng)};
      }
    a.orbitals = Eigen::HouseholderQR<ComplexMatrix>(a.orbitals).householderQ() * ComplexMatrix::Identity(6, 2);
    b.orbitals = Eigen::HouseholderQR<ComplexMatrix>(b.orbitals).householderQ() * ComplexMatrix::Identity(6, 2);
    const cdouble want = fock.slater(a.orbitals).dot(fock.slater(b.orbitals));
    CHECK(std::abs(slater_overlap(a, b) - want) < 1e-12);
  }
}

TEST_CASE("Slater ground state matches the many-body ground state") {
  const LatticeSpec spec = LatticeSpec::make(3, 2, 0.3, 0.1);
  const std::vector<PinSpec> pins{{{0.4, 0.7}, -1.3, 1.0}};
  const auto H = build_hamiltonian(spec, pins);
  const SlaterState s = ground_slater(H, 2);
  oracle::FockSpace fock(6, 2);
  const oracle::CMat Hmb = fock.second_quantize(H.matrix());
  Eigen::SelfAdjointEigenSolver<oracle::CMat> es(Hmb);
  CHECK(s.total_energy() == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-12));
  CHECK(std::abs(std::abs(fock.slater(s.orbitals).dot(es.eigenvectors().col(0))) - 1.0) < 1e-10);
}

TEST_CASE("single-loop Bargmann phase agrees with the Fock-space oracle") {
  const std::vector<Loop> cases{
      {LatticeSpec::make(4, 2, 0.2, 0.05), 1, -2.0, 1.0, 0.5, 16, false},
      {LatticeSpec::make(4, 2, 0.1, 0.0), 2, -1.5, 0.8, 0.5, 16, false},
      {LatticeSpec::make(4, 3, 0.25, 0.1), 3, -2.5, 1.0, 0.9, 24, false},
      {LatticeSpec::make(4, 3, 0.0, 0.2), 2, 1.5, 1.0, 0.8, 20, false},
  };
  for (const Loop& c : cases) {
    CAPTURE(c.N);
    CAPTURE(c.R);
    CHECK(phase_distance(library_phase(c), oracle::loop_phase(c)) < 1e-8);
  }
}

TEST_CASE("exchange Bargmann phase agrees with the Fock-space oracle") {
  const std::vector<Loop> cases{
      {LatticeSpec::make(4, 2, 0.2, 0.05), 2, -2.0, 1.0, 0.5, 16, true},
      {LatticeSpec::make(4, 3, 0.15, 0.1), 3, -1.8, 0.9, 0.9, 24, true},
      {LatticeSpec::make(4, 3, 0.3, 0.0), 2, 1.2, 1.0, 0.7, 20, true},
  };
  for (const Loop& c : cases) {
    CAPTURE(c.N);
    CAPTURE(c.R);
    CHECK(phase_distance(library_phase(c), oracle::loop_phase(c)) < 1e-8);
  }
}
