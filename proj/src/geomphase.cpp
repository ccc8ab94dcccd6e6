#include "chernbraid/geomphase.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <numbers>

#include "chernbraid/errors.hpp"

namespace chernbraid {

namespace {

constexpr double kPi = std::numbers::pi;
// Smallest singular value of the orbital overlap matrix tolerated by alignment.
constexpr double kAlignmentFloor = 1e-6;

}  // namespace

void PathPlan::validate() const {
  if (n_steps < 8) throw InvalidArgument("path needs at least 8 steps");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidArgument("path radius must be positive");
  if (orientation != 1 && orientation != -1) throw InvalidArgument("orientation must be +1 or -1");
  if (!std::isfinite(center.x) || !std::isfinite(center.y) || !std::isfinite(start_angle))
    throw InvalidArgument("path geometry must be finite");
}

double PathPlan::angle(int step) const {
  const double sweep = kind == PathKind::SingleLoop ? 2.0 * kPi : kPi;
  return start_angle + orientation * sweep * step / n_steps;
}

std::vector<Vec2> PathPlan::positions(int step) const {
  const double t = angle(step);
  std::vector<Vec2> out{{center.x + radius * std::cos(t), center.y + radius * std::sin(t)}};
  if (kind == PathKind::ExchangeHalfLoop)
    out.push_back({center.x + radius * std::cos(t + kPi), center.y + radius * std::sin(t + kPi)});
  return out;
}

std::vector<PinSpec> PathPlan::pins(int step, const PinSpec& pin_template) const {
  std::vector<PinSpec> out;
  for (const Vec2& p : positions(step)) {
    PinSpec pin = pin_template;
    pin.center = p;
    out.push_back(pin);
  }
  return out;
}

cdouble slater_overlap(const SlaterState& a, const SlaterState& b) {
  if (a.sites() != b.sites() || a.particles() != b.particles())
    throw InvalidArgument("slater_overlap: dimension mismatch");
  const ComplexMatrix m = a.orbitals.adjoint() * b.orbitals;
  return m.partialPivLu().determinant();
}

SlaterState align_to_previous(const SlaterState& prev, const SlaterState& cur) {
  if (prev.sites() != cur.sites() || prev.particles() != cur.particles())
    throw InvalidArgument("align_to_previous: dimension mismatch");
  const ComplexMatrix m = cur.orbitals.adjoint() * prev.orbitals;  // <cur_k|prev_l>
  Eigen::JacobiSVD<ComplexMatrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double smin = svd.singularValues().minCoeff();
  if (smin < kAlignmentFloor) throw AlignmentLost(smin);
  SlaterState out = cur;
  out.orbitals = cur.orbitals * (svd.matrixU() * svd.matrixV().adjoint());
  // Orbital energies lose their meaning inside a degenerate rotation but the
  // set is unchanged; keep them as reported by the eigensolver.
  return out;
}

PhaseRecord bargmann_record(std::span<const SlaterState> states) {
  const int n = static_cast<int>(states.size()) - 1;
  if (n < 1) throw InvalidArgument("bargmann_record needs at least two states");

  PhaseRecord rec;
  cdouble closed{1.0, 0.0};
  for (int j = 0; j <= n; ++j) {
    // <psi_{j+1}|psi_j>, then the closing <psi_0|psi_n>
    const cdouble z = j < n ? slater_overlap(states[j + 1], states[j])
                            : slater_overlap(states[0], states[n]);
    const double mag = std::abs(z);
    rec.step_mags.push_back(mag);
    rec.step_args.push_back(std::arg(z));
    if (j < n) rec.min_mag = std::min(rec.min_mag, mag);
    closed *= mag > 0.0 ? z / mag : cdouble{0.0, 0.0};
  }
  rec.phi_mod = std::arg(closed);
  for (double a : rec.step_args) {
    rec.phi_unwrapped += a;
    rec.max_abs_step_arg = std::max(rec.max_abs_step_arg, std::abs(a));
  }
  rec.reliable = rec.max_abs_step_arg < kPi / 2.0;
  return rec;
}

double bargmann_phase(std::span<const SlaterState* const> cycle) {
  const std::size_t m = cycle.size();
  if (m < 2) throw InvalidArgument("bargmann_phase needs at least two states");
  cdouble product{1.0, 0.0};
  for (std::size_t i = 0; i < m; ++i) {
    const cdouble z = slater_overlap(*cycle[(i + 1) % m], *cycle[i]);
    const double mag = std::abs(z);
    product *= mag > 0.0 ? z / mag : cdouble{0.0, 0.0};
  }
  return std::arg(product);
}

StokesSum stokes_sum(const SlaterState& center, const std::vector<std::vector<SlaterState>>& rings) {
  if (rings.empty()) throw InvalidArgument("stokes_sum needs at least one ring");
  const std::size_t n = rings.front().size();
  for (const auto& ring : rings)
    if (ring.size() != n || n < 2) throw InvalidArgument("stokes_sum: rings of unequal length");

  StokesSum out;
  out.wedge_phases.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t next = (j + 1) % n;
    auto add = [&](double phase) {
      out.wedge_phases[j] += phase;
      out.max_abs_cell_phase = std::max(out.max_abs_cell_phase, std::abs(phase));
    };
    const std::array<const SlaterState*, 3> tip{&rings[0][j], &rings[0][next], &center};
    add(bargmann_phase(tip));
    for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
      const std::array<const SlaterState*, 4> cell{&rings[k + 1][j], &rings[k + 1][next],
                                                   &rings[k][next], &rings[k][j]};
      add(bargmann_phase(cell));
    }
  }
  for (double w : out.wedge_phases) out.total += w;
  return out;
}

SlaterState pinned_ground_state(const LatticeSpec& spec, std::span<const PinSpec> pins, int N,
                                const BandProjector* projector) {
  const HamiltonianMatrix h = build_hamiltonian(spec, pins);
  return projector ? ground_slater_projected(h, *projector, N) : ground_slater(h, N);
}

std::vector<SlaterState> track_path(const LatticeSpec& spec, const PinSpec& pin_template,
                                    const PathPlan& path, int N, const SweepOptions& options) {
  path.validate();
  std::vector<SlaterState> states;
  states.reserve(path.n_steps + 1);
  for (int j = 0; j <= path.n_steps; ++j) {
    const auto pins = path.pins(j, pin_template);
    try {
      SlaterState s = pinned_ground_state(spec, pins, N, options.projector);
      if (options.align && j > 0) s = align_to_previous(states.back(), s);
      states.push_back(std::move(s));
    } catch (const GroundStateDegenerate& e) {
      throw GroundStateDegenerate(e.gap(), j);
    } catch (const AlignmentLost& e) {
      throw AlignmentLost(e.min_singular_value(), j);
    }
  }
  return states;
}

PhaseRecord sweep(const LatticeSpec& spec, const PinSpec& pin_template, const PathPlan& path, int N,
                  const SweepOptions& options) {
  const auto states = track_path(spec, pin_template, path, N, options);
  PhaseRecord rec = bargmann_record(states);
  if (options.unwrapping == Unwrapping::None) return rec;

  if (!(options.ring_spacing > 0.0)) throw InvalidArgument("ring spacing must be positive");
  const int n = path.n_steps;
  const int K = std::max(1, static_cast<int>(std::ceil(path.radius / options.ring_spacing - 1e-9)));
  std::vector<std::vector<SlaterState>> rings;
  std::optional<SlaterState> center;
  try {
    for (int k = 1; k < K; ++k) {
      PathPlan inner = path;
      inner.radius = path.radius * k / K;
      std::vector<SlaterState> ring;
      ring.reserve(n);
      for (int j = 0; j < n; ++j)
        ring.push_back(pinned_ground_state(spec, inner.pins(j, pin_template), N, options.projector));
      rings.push_back(std::move(ring));
    }
    rings.emplace_back(states.begin(), states.begin() + n);
    std::vector<PinSpec> centered(static_cast<std::size_t>(path.pin_count()), pin_template);
    for (auto& p : centered) p.center = path.center;
    center = pinned_ground_state(spec, centered, N, options.projector);
  } catch (const GroundStateDegenerate&) {
    // The tiling is unavailable; the plain record stands but cannot be trusted
    // beyond mod 2 pi.
    rec.reliable = false;
    return rec;
  }

  const StokesSum tiled = stokes_sum(*center, rings);
  rec.step_args.assign(tiled.wedge_phases.begin(), tiled.wedge_phases.end());
  rec.step_args.push_back(0.0);
  rec.phi_unwrapped = tiled.total;
  rec.max_abs_step_arg = tiled.max_abs_cell_phase;
  rec.reliable = tiled.max_abs_cell_phase < kPi / 2.0;
  return rec;
}

PhaseRecord run_exchange(const LatticeSpec& spec, const PinSpec& pin_template, double R, int n_steps,
                         int N, const SweepOptions& options) {
  const Vec2 c = spec.center();
  if (c.x - R < 0.0 || c.x + R > spec.Lx - 1 || c.y - R < 0.0 || c.y + R > spec.Ly - 1)
    throw InvalidArgument("exchange circle of radius " + std::to_string(R) + " leaves the lattice");
  PathPlan path;
  path.kind = PathKind::ExchangeHalfLoop;
  path.center = spec.center();
  path.radius = R;
  path.n_steps = n_steps;
  return sweep(spec, pin_template, path, N, options);
}

}  // namespace chernbraid
