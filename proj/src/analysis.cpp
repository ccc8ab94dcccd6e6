#include "chernbraid/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

#include "chernbraid/errors.hpp"

namespace chernbraid {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

double predict_ab_local(double delta_alpha, double R, double q_star) {
  return kTwoPi * delta_alpha * std::min(4.0, kPi * R * R) * q_star;
}

double predict_ab_background(double delta_phi, double R, double alpha, double q_star) {
  return kTwoPi * q_star * (alpha * kPi * R * R + delta_phi);
}

ChargeFit fit_charge(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw InvalidArgument("fit_charge needs at least two points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw InvalidArgument("fit_charge: non-finite point");
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx <= 0.0) throw InvalidArgument("fit_charge: all delta_phi values identical");

  ChargeFit fit;
  const double slope = sxy / sxx;
  fit.q_star = slope / kTwoPi;
  fit.intercept = my - slope * mx;
  double ss = 0.0;
  for (const auto& [x, y] : points) {
    const double r = y - (slope * x + fit.intercept);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / n);
  fit.points.assign(points.begin(), points.end());
  return fit;
}

std::vector<double> unwrap_sequence(std::span<const double> phases) {
  std::vector<double> out(phases.begin(), phases.end());
  for (std::size_t i = 1; i < out.size(); ++i) {
    const double jump = out[i] - out[i - 1];
    out[i] -= kTwoPi * std::round(jump / kTwoPi);
  }
  return out;
}

double wrap_phase(double phi) {
  double r = std::remainder(phi, kTwoPi);  // [-pi, pi]
  if (r <= -kPi) r += kTwoPi;
  return r;
}

double phase_distance(double a, double b) { return std::abs(wrap_phase(a - b)); }

double exchange_phase(double phi_geo, double phi_ab) {
  const double r = wrap_phase(phi_geo - phi_ab);
  return r < -kPi + 1e-12 ? kPi : r;
}

double magnetic_length(double alpha) {
  return alpha > 0.0 ? 1.0 / std::sqrt(kTwoPi * alpha) : std::numeric_limits<double>::infinity();
}

double charge_expectation(const LatticeSpec& spec, const SlaterState& state,
                          const DensityField& reference, Vec2 pin_center, double xi) {
  if (state.sites() != spec.sites() || reference.size() != spec.sites())
    throw InvalidArgument("charge_expectation: dimension mismatch");
  if (!(xi > 0.0)) throw InvalidArgument("charge_expectation: xi must be positive");
  const double lB = magnetic_length(spec.alpha);
  if (!(xi > lB))
    std::clog << "warning: envelope width xi = " << xi << " does not exceed the magnetic length "
              << lB << "\n";

  const DensityField n = density(state);
  double q = 0.0;
  for (int s = 0; s < spec.sites(); ++s) {
    const Vec2 r = spec.position(s);
    const double dx = r.x - pin_center.x;
    const double dy = r.y - pin_center.y;
    q += std::exp(-(dx * dx + dy * dy) / (xi * xi)) * (n[s] - reference[s]);
  }
  return q;
}

}  // namespace chernbraid
