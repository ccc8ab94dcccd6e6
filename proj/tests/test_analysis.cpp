#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "chernbraid/analysis.hpp"
#include "chernbraid/errors.hpp"

using namespace chernbraid;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("Aharonov-Bohm predictions") {
  CHECK(predict_ab_background(0.0, 1.0, 0.2, 1.0) == doctest::Approx(2 * kPi * 0.2 * kPi));
  CHECK(predict_ab_background(0.1, 0.0, 0.2, 0.5) == doctest::Approx(kPi * 0.1));
  CHECK(predict_ab_local(0.01, 5.0, 1.0) == doctest::Approx(2 * kPi * 0.04));
  CHECK(predict_ab_local(0.01, 0.5, -1.0) == doctest::Approx(-2 * kPi * 0.01 * kPi * 0.25));
  // The two branches meet where the circle area equals the four plaquettes.
  const double Rc = 2.0 / std::sqrt(kPi);
  CHECK(predict_ab_local(0.03, Rc * (1 - 1e-12), 0.7) == doctest::Approx(predict_ab_local(0.03, Rc * (1 + 1e-12), 0.7)));
}

TEST_CASE("charge fit recovers synthetic lines") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    const double q = u(rng), c = 10.0 * u(rng);
    std::vector<std::pair<double, double>> pts;
    for (int k = 0; k < 5; ++k) pts.emplace_back(0.02 * k, 2 * kPi * q * 0.02 * k + c);
    const ChargeFit f = fit_charge(pts);
    CHECK(std::abs(f.q_star - q) < 1e-10);
    CHECK(std::abs(f.intercept - c) < 1e-10);
    CHECK(f.residual_rms < 1e-10);
  }
  const std::vector<std::pair<double, double>> one{{0.0, 1.0}};
  CHECK_THROWS_AS(fit_charge(one), InvalidArgument);
  const std::vector<std::pair<double, double>> same{{0.1, 1.0}, {0.1, 2.0}};
  CHECK_THROWS_AS(fit_charge(same), InvalidArgument);
  const std::vector<std::pair<double, double>> nan{{0.0, 1.0}, {0.1, NAN}};
  CHECK_THROWS_AS(fit_charge(nan), InvalidArgument);
}

TEST_CASE("phase wrapping and unwrapping") {
  CHECK(wrap_phase(kPi) == doctest::Approx(kPi));
  CHECK(wrap_phase(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_phase(3 * kPi / 2) == doctest::Approx(-kPi / 2));
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int t = 0; t < 1000; ++t) {
    const double w = wrap_phase(u(rng));
    CHECK(w > -kPi);
    CHECK(w <= kPi);
  }
  CHECK(phase_distance(0.1, 2 * kPi - 0.1) == doctest::Approx(0.2));
  std::vector<double> smooth, wrapped;
  for (int k = 0; k < 50; ++k) {
    smooth.push_back(0.4 * k - 3.0);
    wrapped.push_back(wrap_phase(smooth.back()));
  }
  const auto un = unwrap_sequence(wrapped);
  for (int k = 0; k < 50; ++k) CHECK(un[k] == doctest::Approx(wrapped[0] + smooth[k] - smooth[0]).epsilon(1e-12));
}

TEST_CASE("exchange phase convention") {
  CHECK(exchange_phase(kPi / 2, -kPi / 2) == doctest::Approx(kPi));
  CHECK(exchange_phase(0.0, kPi) == doctest::Approx(kPi));
  CHECK(exchange_phase(1.0, 1.0 + 4 * kPi) == doctest::Approx(0.0));
  CHECK(exchange_phase(0.3, -0.2) == doctest::Approx(0.5));
}

TEST_CASE("magnetic length") {
  CHECK(magnetic_length(1.0 / (2 * kPi)) == doctest::Approx(1.0));
  CHECK(std::isinf(magnetic_length(0.0)));
}

TEST_CASE("envelope charge is gauge invariant and counts a localized particle") {
  const LatticeSpec spec = LatticeSpec::make(11, 11, 0.2);
  const auto H0 = build_hamiltonian(spec);
  const std::vector<PinSpec> pins{{{5.0, 5.0}, -4.0, 1.0}};
  const auto H = build_hamiltonian(spec, pins);
  const DensityField n0 = density(ground_slater(H0, 10));
  const double q = charge_expectation(spec, ground_slater(H, 10), n0, {5.0, 5.0}, 2.0);

  RealVector chi = RealVector::LinSpaced(spec.sites(), 0.0, 17.0);
  const double qg = charge_expectation(spec, ground_slater(H.gauge_transformed(chi), 10),
                                       density(ground_slater(H0.gauge_transformed(chi), 10)), {5.0, 5.0}, 2.0);
  CHECK(q == doctest::Approx(qg).epsilon(1e-10));

  // Single particle deep in a strong pin: almost the whole envelope weight.
  const SlaterState one = ground_slater(build_hamiltonian(spec, std::vector<PinSpec>{{{5.0, 5.0}, -8.0, 1.0}}), 1);
  const DensityField zero = RealVector::Zero(spec.sites());
  const double q1 = charge_expectation(spec, one, zero, {5.0, 5.0}, 3.0);
  CHECK(q1 > 0.9);
  CHECK(q1 <= 1.0);
  CHECK_THROWS_AS(charge_expectation(spec, one, zero, {5.0, 5.0}, 0.0), InvalidArgument);
}
