#pragma once

#include <complex>
#include <functional>
#include <vector>

namespace chernbraid::interferometry {

using cdouble = std::complex<double>;

enum class Spin { Up, Down };

/// One impurity: trap position label and internal state.
struct Impurity {
  int position = 0;
  Spin spin = Spin::Up;

  friend bool operator==(const Impurity&, const Impurity&) = default;
};

/// Record of a quasihole transport: which hole (by starting position) went
/// where, and in which transport stage.
struct Move {
  int origin = 0;
  int destination = 0;
  int stage = 0;

  friend bool operator==(const Move&, const Move&) = default;
};

/// Term of the joint impurity + quantum-Hall state. The quantum-Hall part is
/// kept symbolically as the list of transports applied to the initial state;
/// in the Abelian case it equals the initial state times a phase fixed by
/// that list.
struct Branch {
  std::vector<Impurity> impurities;  // ordered, one entry per impurity
  std::vector<int> hole_origin;      // starting position of the hole bound to each impurity
  std::vector<Move> history;         // sorted by origin
  cdouble amplitude;
};

/// Superposition of branches of a one- or two-impurity interferometer.
class BranchState {
 public:
  /// Impurities in |up> at the given positions, each binding a quasihole.
  /// Impurities keep their slot; measurement compares positions as a set.
  explicit BranchState(const std::vector<int>& positions);

  /// Ramsey pulse on every impurity: up -> (up+down)/sqrt2, down -> (up-down)/sqrt2.
  void pulse_half_pi();
  /// Spin flip on every impurity.
  void pulse_pi();

  /// Moves every spin-up impurity sitting at route.first to route.second,
  /// dragging its hole along and recording the move.
  void transport(const std::vector<std::pair<int, int>>& routes, int stage);

  /// Sum of |amplitude|^2 over distinguishable branches.
  double norm() const;

  /// Probability to find spin-up impurities at exactly the given positions
  /// (as a set), with Abelian transport factors supplied by `factor`. Branches
  /// whose impurities coincide in position never contribute.
  double probability_all_up(const std::vector<int>& positions,
                            const std::function<cdouble(const std::vector<Move>&)>& factor) const;

  const std::vector<Branch>& branches() const { return branches_; }

 private:
  void merge();
  std::vector<Branch> branches_;
};

/// Ramsey + spin-echo sequence with one impurity. The hole picks up
/// exp(i phase_first_half) on the first half of the loop and
/// exp(i phase_second_half) on the complementary half; returns p_up, which
/// equals cos^2 of half the closed-loop phase.
double run_single_impurity_sequence(double phase_first_half, double phase_second_half);

/// Abelian transport factors of the four final branches of the two-impurity sequence.
struct TwoImpurityFactors {
  cdouble direct = 1.0;    // U_{1->3} U_{2->4}
  cdouble exchange = 1.0;  // U_{1->4} U_{2->3}
  cdouble both_to_3 = 1.0; // U_{1->3} U_{2->3}
  cdouble both_to_4 = 1.0; // U_{1->4} U_{2->4}
};

/// Two-impurity exchange sequence; returns p_{up,up} at (r3, r4).
/// Throws InvalidArgument unless every factor has unit modulus (to 1e-10).
double run_two_impurity_sequence(const TwoImpurityFactors& factors);

/// <psi|W|psi> for a Wilson-loop matrix element.
struct WilsonSample {
  double magnitude = 1.0;
  double phase = 0.0;
};

/// p_{up,up} = (1 + |<W>| cos(phase)) / 8.
double nonabelian_probability(const WilsonSample& w);

/// Closed forms: cos^2(phi/2) and cos^2(phi/2) / 4.
double single_impurity_closed_form(double phi_geo);
double two_impurity_closed_form(double phi_geo);

}  // namespace chernbraid::interferometry
