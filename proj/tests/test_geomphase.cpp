#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "chernbraid/analysis.hpp"
#include "chernbraid/errors.hpp"
#include "chernbraid/geomphase.hpp"

using namespace chernbraid;

namespace {

constexpr double kPi = std::numbers::pi;

ComplexMatrix random_unitary(int n, std::mt19937& rng) {
  std::normal_distribution<double> g;
  ComplexMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = {g(rng), g(rng)};
  return Eigen::HouseholderQR<ComplexMatrix>(a).householderQ();
}

PathPlan circle(const LatticeSpec& spec, double R, int n, PathKind kind = PathKind::SingleLoop) {
  PathPlan p;
  p.kind = kind;
  p.center = spec.center();
  p.radius = R;
  p.n_steps = n;
  return p;
}

}  // namespace

TEST_CASE("path geometry") {
  const LatticeSpec spec = LatticeSpec::make(9, 9, 0.1);
  PathPlan p = circle(spec, 2.0, 16);
  CHECK(p.positions(0)[0] == Vec2{6.0, 4.0});
  CHECK(p.positions(4)[0].x == doctest::Approx(4.0));
  CHECK(p.positions(4)[0].y == doctest::Approx(6.0));
  p.kind = PathKind::ExchangeHalfLoop;
  const auto end = p.positions(16);
  CHECK(end[0].x == doctest::Approx(2.0));
  CHECK(end[1].x == doctest::Approx(6.0));
  CHECK(p.pins(3, {{0, 0}, -1.0, 0.7}).size() == 2);
  p.n_steps = 4;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.n_steps = 16;
  p.orientation = 0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("Bargmann phase is invariant under orbital rotations") {
  const LatticeSpec spec = LatticeSpec::make(7, 7, 0.2, 0.05);
  const PinSpec pin{{0, 0}, -2.0, 1.0};
  const auto states = track_path(spec, pin, circle(spec, 1.5, 24), 3, {.align = false});
  const PhaseRecord ref = bargmann_record(states);
  std::mt19937 rng(1);
  for (int t = 0; t < 5; ++t) {
    std::vector<SlaterState> rotated = states;
    for (auto& s : rotated) s.orbitals = s.orbitals * random_unitary(3, rng);
    const PhaseRecord r = bargmann_record(rotated);
    CHECK(phase_distance(r.phi_mod, ref.phi_mod) < 1e-10);
    CHECK(r.min_mag == doctest::Approx(ref.min_mag).epsilon(1e-10));
  }
}

TEST_CASE("alignment does not change the closed-loop phase") {
  const LatticeSpec spec = LatticeSpec::make(7, 7, 0.2, 0.05);
  const PinSpec pin{{0, 0}, -2.0, 1.0};
  const PathPlan path = circle(spec, 1.5, 24);
  const PhaseRecord a = sweep(spec, pin, path, 3, {.align = true});
  const PhaseRecord b = sweep(spec, pin, path, 3, {.align = false});
  CHECK(phase_distance(a.phi_mod, b.phi_mod) < 1e-10);
  // Aligned steps have positive real overlaps; the phase collects in the closing factor.
  for (std::size_t j = 0; j + 1 < a.step_args.size(); ++j) CHECK(std::abs(a.step_args[j]) < 1e-10);
}

TEST_CASE("reversing the orientation reverses the phase") {
  const LatticeSpec spec = LatticeSpec::make(7, 7, 0.15, 0.1);
  const PinSpec pin{{0, 0}, -1.5, 1.0};
  PathPlan path = circle(spec, 2.0, 32);
  const double ccw = sweep(spec, pin, path, 2).phi_mod;
  path.orientation = -1;
  const double cw = sweep(spec, pin, path, 2).phi_mod;
  CHECK(phase_distance(ccw, -cw) < 1e-10);
}

TEST_CASE("two successive exchanges give twice the single exchange phase") {
  // The lattice and defect are symmetric under rotation by pi about the center.
  const LatticeSpec spec = LatticeSpec::make(7, 7, 0.2, 0.05);
  const PinSpec pin{{0, 0}, -2.0, 1.0};
  PathPlan first = circle(spec, 2.0, 20, PathKind::ExchangeHalfLoop);
  PathPlan second = first;
  second.start_angle = kPi;
  const double a = sweep(spec, pin, first, 2).phi_mod;
  const double b = sweep(spec, pin, second, 2).phi_mod;
  CHECK(phase_distance(a, b) < 1e-10);
  // Concatenated loop: the shared chord between the two halves cancels.
  auto s1 = track_path(spec, pin, first, 2);
  auto s2 = track_path(spec, pin, second, 2);
  std::vector<SlaterState> full = s1;
  full.insert(full.end(), s2.begin() + 1, s2.end());
  CHECK(phase_distance(bargmann_record(full).phi_mod, 2.0 * a) < 1e-10);
}

TEST_CASE("radial unwrapping agrees with the plain phase modulo 2 pi") {
  const LatticeSpec spec = LatticeSpec::make(9, 9, 0.2, 0.04);
  const PinSpec pin{{0, 0}, -3.0, 1.0};
  const PathPlan path = circle(spec, 2.5, 24);
  const PhaseRecord plain = sweep(spec, pin, path, 1);
  const PhaseRecord radial = sweep(spec, pin, path, 1, {.unwrapping = Unwrapping::Radial});
  CHECK(phase_distance(radial.phi_unwrapped, plain.phi_mod) < 1e-8);
  CHECK(phase_distance(radial.phi_mod, plain.phi_mod) < 1e-10);
  // An enclosed flux of alpha * pi R^2 ~ 3.9 quanta exceeds what a single wrap can hold.
  CHECK(std::abs(radial.phi_unwrapped) > 2.0 * kPi);
}

TEST_CASE("align_to_previous yields a positive semidefinite overlap") {
  std::mt19937 rng(4);
  SlaterState prev, cur;
  prev.orbitals = random_unitary(8, rng).leftCols(3);
  cur.orbitals = (prev.orbitals + 0.3 * random_unitary(8, rng).leftCols(3)).householderQr().householderQ() *
                 ComplexMatrix::Identity(8, 3);
  const SlaterState al = align_to_previous(prev, cur);
  const ComplexMatrix m = al.orbitals.adjoint() * prev.orbitals;
  CHECK((m - m.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
  // Same occupied subspace.
  const ComplexMatrix pc = cur.orbitals * cur.orbitals.adjoint();
  const ComplexMatrix pa = al.orbitals * al.orbitals.adjoint();
  CHECK((pc - pa).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(std::arg(slater_overlap(al, prev))) < 1e-12);
}

TEST_CASE("orthogonal subspaces cannot be aligned") {
  SlaterState a, b;
  a.orbitals = ComplexMatrix::Identity(4, 2);
  b.orbitals = ComplexMatrix::Zero(4, 2);
  b.orbitals(2, 0) = 1.0;
  b.orbitals(3, 1) = 1.0;
  CHECK_THROWS_AS(align_to_previous(a, b), AlignmentLost);
}
