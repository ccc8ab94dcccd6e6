#include "chernbraid/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "chernbraid/errors.hpp"

namespace chernbraid {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<int> central_pair(int L) {
  // Columns (or rows) of plaquettes adjacent to the center coordinate.
  const double c = (L - 1) / 2.0;
  const int hi_edge = L - 2;
  std::vector<int> out;
  for (int v : {static_cast<int>(std::ceil(c)) - 1, static_cast<int>(std::ceil(c))}) {
    v = std::clamp(v, 0, hi_edge);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

}  // namespace

bool DefectFlux::contains(Plaquette p) const {
  return std::find(plaquettes.begin(), plaquettes.end(), p) != plaquettes.end();
}

DefectFlux DefectFlux::central(int Lx, int Ly, double total) {
  DefectFlux d;
  d.total = total;
  if (Lx < 2 || Ly < 2) return d;
  for (int y : central_pair(Ly))
    for (int x : central_pair(Lx)) d.plaquettes.push_back({x, y});
  return d;
}

LatticeSpec LatticeSpec::make(int Lx, int Ly, double alpha, double delta_phi) {
  LatticeSpec s;
  s.Lx = Lx;
  s.Ly = Ly;
  s.alpha = alpha;
  s.defect = DefectFlux::central(Lx, Ly, delta_phi);
  return s;
}

double LatticeSpec::flux(Plaquette p) const {
  return defect.contains(p) ? alpha + defect.per_plaquette() : alpha;
}

LatticeSpec LatticeSpec::validated() const {
  if (Lx < 2 || Ly < 2)
    throw InvalidArgument("lattice must be at least 2x2, got " + std::to_string(Lx) + "x" +
                          std::to_string(Ly));
  if (!std::isfinite(alpha)) throw InvalidArgument("background flux alpha is not finite");
  if (!std::isfinite(defect.total)) throw InvalidArgument("defect flux is not finite");
  for (const auto& p : defect.plaquettes)
    if (p.x < 0 || p.y < 0 || p.x > Lx - 2 || p.y > Ly - 2)
      throw InvalidArgument("defect plaquette (" + std::to_string(p.x) + "," +
                            std::to_string(p.y) + ") outside the lattice");
  LatticeSpec out = *this;
  if (alpha < 0.0 || alpha >= 1.0) {
    out.alpha = alpha - std::floor(alpha);
    std::clog << "warning: alpha = " << alpha << " reduced mod 1 to " << out.alpha << "\n";
  }
  return out;
}

double PinSpec::potential_at(Vec2 r) const {
  const double dx = r.x - center.x;
  const double dy = r.y - center.y;
  return strength * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
}

HamiltonianMatrix HamiltonianMatrix::gauge_transformed(const RealVector& chi) const {
  if (chi.size() != dim()) throw InvalidArgument("gauge vector has wrong length");
  Eigen::VectorXcd u(dim());
  for (int i = 0; i < dim(); ++i) u[i] = std::polar(1.0, chi[i]);
  ComplexMatrix g = u.asDiagonal() * m_ * u.conjugate().asDiagonal();
  return HamiltonianMatrix(Lx_, Ly_, std::move(g));
}

HamiltonianMatrix build_hamiltonian(const LatticeSpec& raw, std::span<const PinSpec> pins) {
  const LatticeSpec spec = raw.validated();
  for (const auto& pin : pins) {
    if (!std::isfinite(pin.center.x) || !std::isfinite(pin.center.y) ||
        !std::isfinite(pin.strength) || !std::isfinite(pin.width))
      throw InvalidArgument("pin parameters must be finite");
    if (pin.width <= 0.0) throw InvalidArgument("pin width must be positive");
  }

  const int n = spec.sites();
  ComplexMatrix h = ComplexMatrix::Zero(n, n);
  constexpr double J = 1.0;

  for (int y = 0; y < spec.Ly; ++y) {
    for (int x = 0; x + 1 < spec.Lx; ++x) {
      const int i = spec.index(x, y);
      const int j = spec.index(x + 1, y);
      h(j, i) = -J;
      h(i, j) = -J;
    }
  }
  for (int y = 0; y + 1 < spec.Ly; ++y) {
    double accumulated = 0.0;  // flux to the left of column x in plaquette row y
    for (int x = 0; x < spec.Lx; ++x) {
      const int i = spec.index(x, y);
      const int j = spec.index(x, y + 1);
      const cdouble t = -J * std::polar(1.0, kTwoPi * accumulated);
      h(j, i) = t;
      h(i, j) = std::conj(t);
      if (x + 1 < spec.Lx) accumulated += spec.flux({x, y});
    }
  }
  for (int s = 0; s < n; ++s) {
    double v = 0.0;
    for (const auto& pin : pins) v += pin.potential_at(spec.position(s));
    h(s, s) = v;
  }
  return HamiltonianMatrix(spec.Lx, spec.Ly, std::move(h));
}

double plaquette_flux(const HamiltonianMatrix& H, Plaquette p) {
  if (p.x < 0 || p.y < 0 || p.x > H.Lx() - 2 || p.y > H.Ly() - 2)
    throw InvalidArgument("plaquette (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                          ") out of bounds");
  const auto& m = H.matrix();
  auto idx = [&](int x, int y) { return x + H.Lx() * y; };
  // Counterclockwise; the factor for hopping i -> j is -H(j, i) / J.
  const int a = idx(p.x, p.y);
  const int b = idx(p.x + 1, p.y);
  const int c = idx(p.x + 1, p.y + 1);
  const int d = idx(p.x, p.y + 1);
  const cdouble loop = (-m(b, a)) * (-m(c, b)) * (-m(d, c)) * (-m(a, d));
  return std::arg(loop) / kTwoPi;
}

}  // namespace chernbraid
