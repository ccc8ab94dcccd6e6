#pragma once

#include <span>
#include <utility>
#include <vector>

#include "chernbraid/lattice.hpp"
#include "chernbraid/manybody.hpp"

namespace chernbraid {

/// Aharonov-Bohm phase of charge q around a local flux of delta_alpha on each
/// of the four central plaquettes; the min() caps the enclosed area at the
/// defect size for loops that only partly encircle it.
double predict_ab_local(double delta_alpha, double R, double q_star);

/// Aharonov-Bohm phase around a circle of radius R enclosing the whole
/// defect: 2 pi q (alpha pi R^2 + delta_phi).
double predict_ab_background(double delta_phi, double R, double alpha, double q_star);

/// Least-squares line phi = 2 pi q* delta_phi + c.
struct ChargeFit {
  double q_star = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  std::vector<std::pair<double, double>> points;
};

/// Throws InvalidArgument with fewer than two distinct delta_phi values.
ChargeFit fit_charge(std::span<const std::pair<double, double>> points);

/// Removes 2 pi jumps between consecutive entries (ordered by the caller).
std::vector<double> unwrap_sequence(std::span<const double> phases);

/// Reduces a phase to (-pi, pi].
double wrap_phase(double phi);

/// Distance between two phases on the circle, in [0, pi].
double phase_distance(double a, double b);

/// phi_geo - phi_AB reduced to (-pi, pi]; a result within 1e-12 of -pi is reported as +pi.
double exchange_phase(double phi_geo, double phi_ab);

/// Magnetic length a / sqrt(2 pi alpha), infinite for alpha = 0.
double magnetic_length(double alpha);

/// sum_r exp(-|r - R|^2 / xi^2) (<n_r> - n0_r) over the lattice of `spec`.
/// Warns when xi does not exceed the magnetic length.
double charge_expectation(const LatticeSpec& spec, const SlaterState& state,
                          const DensityField& reference, Vec2 pin_center, double xi = 2.0);

}  // namespace chernbraid
