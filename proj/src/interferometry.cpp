#include "chernbraid/interferometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "chernbraid/errors.hpp"

namespace chernbraid::interferometry {

namespace {

constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
constexpr double kUnitTolerance = 1e-10;

// Trap labels of the two-impurity sequence.
constexpr int kR1 = 1, kR2 = 2, kR3 = 3, kR4 = 4;

bool same_labels(const Branch& a, const Branch& b) {
  return a.impurities == b.impurities && a.hole_origin == b.hole_origin && a.history == b.history;
}

}  // namespace

BranchState::BranchState(const std::vector<int>& positions) {
  if (positions.empty() || positions.size() > 2)
    throw InvalidArgument("BranchState supports one or two impurities");
  Branch b;
  for (int p : positions) {
    b.impurities.push_back({p, Spin::Up});
    b.hole_origin.push_back(p);
  }
  b.amplitude = 1.0;
  branches_.push_back(std::move(b));
}

void BranchState::pulse_half_pi() {
  for (std::size_t slot = 0; slot < branches_.front().impurities.size(); ++slot) {
    std::vector<Branch> next;
    next.reserve(2 * branches_.size());
    for (const Branch& b : branches_) {
      const bool up = b.impurities[slot].spin == Spin::Up;
      Branch to_up = b, to_down = b;
      to_up.impurities[slot].spin = Spin::Up;
      to_down.impurities[slot].spin = Spin::Down;
      to_up.amplitude *= kInvSqrt2;
      to_down.amplitude *= up ? kInvSqrt2 : -kInvSqrt2;
      next.push_back(std::move(to_up));
      next.push_back(std::move(to_down));
    }
    branches_ = std::move(next);
    merge();
  }
}

void BranchState::pulse_pi() {
  for (Branch& b : branches_)
    for (Impurity& imp : b.impurities) imp.spin = imp.spin == Spin::Up ? Spin::Down : Spin::Up;
}

void BranchState::transport(const std::vector<std::pair<int, int>>& routes, int stage) {
  for (Branch& b : branches_) {
    for (std::size_t slot = 0; slot < b.impurities.size(); ++slot) {
      Impurity& imp = b.impurities[slot];
      if (imp.spin != Spin::Up) continue;
      const auto it = std::find_if(routes.begin(), routes.end(),
                                   [&](const auto& r) { return r.first == imp.position; });
      if (it == routes.end()) continue;
      imp.position = it->second;
      b.history.push_back({b.hole_origin[slot], it->second, stage});
    }
    std::sort(b.history.begin(), b.history.end(), [](const Move& x, const Move& y) {
      return std::tie(x.origin, x.stage, x.destination) < std::tie(y.origin, y.stage, y.destination);
    });
  }
  merge();
}

void BranchState::merge() {
  std::vector<Branch> out;
  for (Branch& b : branches_) {
    auto it = std::find_if(out.begin(), out.end(), [&](const Branch& o) { return same_labels(o, b); });
    if (it == out.end())
      out.push_back(std::move(b));
    else
      it->amplitude += b.amplitude;
  }
  std::erase_if(out, [](const Branch& b) { return std::abs(b.amplitude) == 0.0; });
  branches_ = std::move(out);
}

double BranchState::norm() const {
  double s = 0.0;
  for (const Branch& b : branches_) s += std::norm(b.amplitude);
  return s;
}

double BranchState::probability_all_up(
    const std::vector<int>& positions,
    const std::function<cdouble(const std::vector<Move>&)>& factor) const {
  std::vector<int> want = positions;
  std::sort(want.begin(), want.end());
  cdouble amp{0.0, 0.0};
  for (const Branch& b : branches_) {
    if (b.impurities.size() != want.size()) continue;
    std::vector<int> got;
    bool all_up = true;
    for (const Impurity& imp : b.impurities) {
      all_up = all_up && imp.spin == Spin::Up;
      got.push_back(imp.position);
    }
    std::sort(got.begin(), got.end());
    if (!all_up || got != want) continue;
    if (std::adjacent_find(got.begin(), got.end()) != got.end()) continue;
    amp += b.amplitude * factor(b.history);
  }
  return std::norm(amp);
}

double run_single_impurity_sequence(double phase_first_half, double phase_second_half) {
  BranchState s({kR1});
  s.pulse_half_pi();
  s.transport({{kR1, kR2}}, 1);
  s.pulse_pi();
  s.transport({{kR1, kR2}}, 2);
  s.pulse_half_pi();
  return s.probability_all_up({kR2}, [&](const std::vector<Move>& h) {
    cdouble f{1.0, 0.0};
    for (const Move& m : h)
      f *= std::polar(1.0, m.stage == 1 ? phase_first_half : phase_second_half);
    return f;
  });
}

double run_two_impurity_sequence(const TwoImpurityFactors& factors) {
  for (cdouble z : {factors.direct, factors.exchange, factors.both_to_3, factors.both_to_4})
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) ||
        std::abs(std::abs(z) - 1.0) > kUnitTolerance)
      throw InvalidArgument("transport factors must have unit modulus");

  BranchState s({kR1, kR2});
  s.pulse_half_pi();
  s.transport({{kR1, kR3}, {kR2, kR4}}, 1);
  s.pulse_pi();
  s.transport({{kR1, kR4}, {kR2, kR3}}, 2);
  s.pulse_half_pi();

  return s.probability_all_up({kR3, kR4}, [&](const std::vector<Move>& h) {
    // Every hole moves exactly once; its destination selects the factor.
    int from1 = 0, from2 = 0;
    for (const Move& m : h) (m.origin == kR1 ? from1 : from2) = m.destination;
    if (from1 == kR3 && from2 == kR4) return factors.direct;
    if (from1 == kR4 && from2 == kR3) return factors.exchange;
    if (from1 == kR3 && from2 == kR3) return factors.both_to_3;
    if (from1 == kR4 && from2 == kR4) return factors.both_to_4;
    throw Error("incomplete transport history");
  });
}

double nonabelian_probability(const WilsonSample& w) {
  return (1.0 + w.magnitude * std::cos(w.phase)) / 8.0;
}

double single_impurity_closed_form(double phi_geo) {
  const double c = std::cos(phi_geo / 2.0);
  return c * c;
}

double two_impurity_closed_form(double phi_geo) { return single_impurity_closed_form(phi_geo) / 4.0; }

}  // namespace chernbraid::interferometry
