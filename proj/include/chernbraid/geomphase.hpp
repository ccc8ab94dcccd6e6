#pragma once

#include <optional>
#include <span>
#include <vector>

#include "chernbraid/lattice.hpp"
#include "chernbraid/manybody.hpp"

namespace chernbraid {

enum class PathKind {
  SingleLoop,        // one pin once around the circle
  ExchangeHalfLoop,  // two diametrically opposite pins, each over half the circle
};

/// Discretized circular trajectory of the pin centers.
struct PathPlan {
  PathKind kind = PathKind::SingleLoop;
  Vec2 center;
  double radius = 1.0;
  int n_steps = 40;
  double start_angle = 0.0;
  int orientation = +1;  // +1 counterclockwise, -1 clockwise

  /// Throws InvalidArgument unless n_steps >= 8, radius > 0 and orientation is +-1.
  void validate() const;
  /// Angle of the first pin at step j, 0 <= j <= n_steps.
  double angle(int step) const;
  /// Pin centers at step j; step n_steps coincides with step 0 as a set.
  std::vector<Vec2> positions(int step) const;
  /// Pins at step j, each a copy of the template moved to its position.
  std::vector<PinSpec> pins(int step, const PinSpec& pin_template) const;
  int pin_count() const { return kind == PathKind::SingleLoop ? 1 : 2; }
};

/// Per-step phase bookkeeping of one closed Bargmann product.
struct PhaseRecord {
  /// Per-step phases, n_steps entries plus the closing factor. Without
  /// unwrapping these are the arguments of <psi_{j+1}|psi_j> (after alignment)
  /// and of <psi_0|psi_n>; with radial unwrapping step j holds the
  /// gauge-invariant phase of the wedge between steps j and j+1 and the
  /// closing entry is zero.
  std::vector<double> step_args;
  /// |<psi_{j+1}|psi_j>| for j = 0..n_steps-1, then the closing factor.
  std::vector<double> step_mags;
  double phi_unwrapped = 0.0;  // sum of step_args
  double phi_mod = 0.0;        // arg of the closed product, in (-pi, pi]
  double min_mag = 1.0;
  /// Largest elementary phase that entered phi_unwrapped (a cell phase in
  /// radial mode, a step argument otherwise).
  double max_abs_step_arg = 0.0;
  bool reliable = true;  // max_abs_step_arg < pi / 2
};

/// <a|b> for two Slater determinants: det of the orbital overlap matrix.
cdouble slater_overlap(const SlaterState& a, const SlaterState& b);

/// Rotates the occupied orbitals of `cur` so that the overlap matrix with
/// `prev` becomes Hermitian positive semidefinite (polar factor of <cur|prev>).
/// The occupied subspace is untouched. Throws AlignmentLost if the subspaces
/// are numerically orthogonal.
SlaterState align_to_previous(const SlaterState& prev, const SlaterState& cur);

/// Closed Bargmann product over psi_0..psi_n, closing factor <psi_0|psi_n> included.
PhaseRecord bargmann_record(std::span<const SlaterState> states);

/// Phase of the closed Bargmann product around a polygon of states, in (-pi, pi].
double bargmann_phase(std::span<const SlaterState* const> cycle);

/// Gauge-invariant unwrapping by tiling the disk spanned by a loop.
///
/// rings[k][j] is the state at radius r_{k+1} and step j (j = 0..n-1, step n
/// being identified with step 0), innermost ring first, the last ring being
/// the loop itself; `center` is the state at radius zero. Each cell
/// between neighbouring rings and steps contributes its own small Bargmann
/// phase, so the sum is free of 2 pi jumps while agreeing with the loop's
/// Bargmann phase mod 2 pi.
struct StokesSum {
  std::vector<double> wedge_phases;  // n entries
  double total = 0.0;
  double max_abs_cell_phase = 0.0;
};
StokesSum stokes_sum(const SlaterState& center, const std::vector<std::vector<SlaterState>>& rings);

enum class Unwrapping {
  None,    // phi_unwrapped is the plain sum of per-step arguments
  Radial,  // Stokes tiling with concentric inner rings
};

/// How each step's ground state is computed.
struct SweepOptions {
  const BandProjector* projector = nullptr;  // restrict to the projector's band
  bool align = true;                         // polar alignment to the previous step
  Unwrapping unwrapping = Unwrapping::None;
  double ring_spacing = 0.5;  // radial cell size for Unwrapping::Radial
};

/// Ground state for an arbitrary pin configuration (projected if requested).
SlaterState pinned_ground_state(const LatticeSpec& spec, std::span<const PinSpec> pins, int N,
                                const BandProjector* projector = nullptr);

/// All states psi_0..psi_n along a path; errors carry the step index.
std::vector<SlaterState> track_path(const LatticeSpec& spec, const PinSpec& pin_template,
                                    const PathPlan& path, int N, const SweepOptions& options = {});

/// Adiabatic transport along `path`, returning the closed-loop phase record.
PhaseRecord sweep(const LatticeSpec& spec, const PinSpec& pin_template, const PathPlan& path, int N,
                  const SweepOptions& options = {});

/// Two-pin exchange along half of the circle of radius R around the lattice center.
PhaseRecord run_exchange(const LatticeSpec& spec, const PinSpec& pin_template, double R, int n_steps,
                         int N, const SweepOptions& options = {});

}  // namespace chernbraid
