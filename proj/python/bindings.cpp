#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "chernbraid/analysis.hpp"
#include "chernbraid/experiment.hpp"
#include "chernbraid/geomphase.hpp"
#include "chernbraid/interferometry.hpp"
#include "chernbraid/lattice.hpp"
#include "chernbraid/manybody.hpp"

namespace py = pybind11;
using namespace chernbraid;

namespace {

std::vector<PinSpec> to_pins(const std::vector<std::tuple<double, double, double, double>>& pins) {
  std::vector<PinSpec> out;
  for (const auto& [x, y, V, sigma] : pins) out.push_back({{x, y}, V, sigma});
  return out;
}

}  // namespace

PYBIND11_MODULE(_chernbraid, m) {
  m.doc() = "Adiabatic transport of pinned particles and holes in Hofstadter lattices";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<GroundStateDegenerate>(m, "GroundStateDegenerate", base.ptr());
  py::register_exception<AlignmentLost>(m, "AlignmentLost", base.ptr());
  py::register_exception<NoBandGap>(m, "NoBandGap", base.ptr());

  py::class_<Vec2>(m, "Vec2")
      .def(py::init<double, double>(), py::arg("x"), py::arg("y"))
      .def_readwrite("x", &Vec2::x)
      .def_readwrite("y", &Vec2::y);

  py::class_<LatticeSpec>(m, "LatticeSpec")
      .def(py::init(&LatticeSpec::make), py::arg("Lx"), py::arg("Ly"), py::arg("alpha"), py::arg("delta_phi") = 0.0)
      .def_readwrite("Lx", &LatticeSpec::Lx)
      .def_readwrite("Ly", &LatticeSpec::Ly)
      .def_readwrite("alpha", &LatticeSpec::alpha)
      .def_property(
          "defect_plaquettes",
          [](const LatticeSpec& s) {
            std::vector<std::pair<int, int>> out;
            for (const Plaquette& p : s.defect.plaquettes) out.emplace_back(p.x, p.y);
            return out;
          },
          [](LatticeSpec& s, const std::vector<std::pair<int, int>>& ps) {
            s.defect.plaquettes.clear();
            for (const auto& [x, y] : ps) s.defect.plaquettes.push_back({x, y});
          })
      .def_property(
          "delta_phi", [](const LatticeSpec& s) { return s.defect.total; },
          [](LatticeSpec& s, double v) { s.defect.total = v; })
      .def("center", [](const LatticeSpec& s) { return std::make_pair(s.center().x, s.center().y); })
      .def("sites", &LatticeSpec::sites)
      .def("flux", [](const LatticeSpec& s, int x, int y) { return s.flux({x, y}); });

  m.def(
      "build_hamiltonian",
      [](const LatticeSpec& spec, const std::vector<std::tuple<double, double, double, double>>& pins) {
        return build_hamiltonian(spec, to_pins(pins)).matrix();
      },
      py::arg("spec"), py::arg("pins") = std::vector<std::tuple<double, double, double, double>>{},
      "Single-particle Hamiltonian; pins are (x, y, strength, width) tuples.");

  m.def(
      "plaquette_flux",
      [](const LatticeSpec& spec, int x, int y) { return plaquette_flux(build_hamiltonian(spec), {x, y}); },
      py::arg("spec"), py::arg("x"), py::arg("y"));

  py::class_<SlaterState>(m, "SlaterState")
      .def_readonly("orbitals", &SlaterState::orbitals)
      .def_readonly("energies", &SlaterState::energies)
      .def_readonly("gap", &SlaterState::gap)
      .def("total_energy", &SlaterState::total_energy)
      .def("density", [](const SlaterState& s) { return density(s); });

  py::class_<BandProjector>(m, "BandProjector")
      .def_readonly("basis", &BandProjector::basis)
      .def_readonly("gap_lower", &BandProjector::gap_lower)
      .def_readonly("gap_upper", &BandProjector::gap_upper)
      .def("dimension", &BandProjector::dimension);

  m.def(
      "ground_state",
      [](const LatticeSpec& spec, const std::vector<std::tuple<double, double, double, double>>& pins, int N,
         const BandProjector* projector) { return pinned_ground_state(spec, to_pins(pins), N, projector); },
      py::arg("spec"), py::arg("pins"), py::arg("N"), py::arg("projector") = nullptr);

  m.def(
      "lowest_band_projector", [](const LatticeSpec& spec) { return lowest_band_projector(build_hamiltonian(spec)); },
      py::arg("spec"));

  m.def("slater_overlap", &slater_overlap, py::arg("a"), py::arg("b"));

  py::class_<PhaseRecord>(m, "PhaseRecord")
      .def_readonly("step_args", &PhaseRecord::step_args)
      .def_readonly("step_mags", &PhaseRecord::step_mags)
      .def_readonly("phi_unwrapped", &PhaseRecord::phi_unwrapped)
      .def_readonly("phi_mod", &PhaseRecord::phi_mod)
      .def_readonly("min_mag", &PhaseRecord::min_mag)
      .def_readonly("reliable", &PhaseRecord::reliable);

  m.def(
      "single_loop",
      [](const LatticeSpec& spec, double strength, double width, double R, int n_steps, int N, bool radial,
         int orientation, const BandProjector* projector) {
        PathPlan path;
        path.center = spec.center();
        path.radius = R;
        path.n_steps = n_steps;
        path.orientation = orientation;
        SweepOptions o;
        o.projector = projector;
        o.unwrapping = radial ? Unwrapping::Radial : Unwrapping::None;
        return sweep(spec, {{0.0, 0.0}, strength, width}, path, N, o);
      },
      py::arg("spec"), py::arg("strength"), py::arg("width"), py::arg("R"), py::arg("n_steps") = 40,
      py::arg("N") = 1, py::arg("radial") = false, py::arg("orientation") = 1, py::arg("projector") = nullptr,
      "Pin carried once around a circle of radius R about the lattice center.");

  m.def(
      "exchange",
      [](const LatticeSpec& spec, double strength, double width, double R, int n_steps, int N,
         const BandProjector* projector) {
        SweepOptions o;
        o.projector = projector;
        return run_exchange(spec, {{0.0, 0.0}, strength, width}, R, n_steps, N, o);
      },
      py::arg("spec"), py::arg("strength"), py::arg("width"), py::arg("R"), py::arg("n_steps") = 40,
      py::arg("N") = 2, py::arg("projector") = nullptr);

  py::class_<ChargeFit>(m, "ChargeFit")
      .def_readonly("q_star", &ChargeFit::q_star)
      .def_readonly("intercept", &ChargeFit::intercept)
      .def_readonly("residual_rms", &ChargeFit::residual_rms);

  m.def(
      "fit_charge",
      [](const std::vector<double>& delta_phi, const std::vector<double>& phi) {
        if (delta_phi.size() != phi.size()) throw InvalidArgument("fit_charge: length mismatch");
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < phi.size(); ++i) pts.emplace_back(delta_phi[i], phi[i]);
        return fit_charge(pts);
      },
      py::arg("delta_phi"), py::arg("phi"));
  m.def("predict_ab_local", &predict_ab_local, py::arg("delta_alpha"), py::arg("R"), py::arg("q_star"));
  m.def("predict_ab_background", &predict_ab_background, py::arg("delta_phi"), py::arg("R"), py::arg("alpha"),
        py::arg("q_star"));
  m.def("wrap_phase", &wrap_phase);
  m.def("exchange_phase", &exchange_phase, py::arg("phi_geo"), py::arg("phi_ab"));
  m.def("unwrap_sequence", [](const std::vector<double>& v) { return unwrap_sequence(v); });
  m.def(
      "charge_expectation",
      [](const LatticeSpec& spec, const SlaterState& state, const RealVector& reference, double x, double y,
         double xi) { return charge_expectation(spec, state, reference, {x, y}, xi); },
      py::arg("spec"), py::arg("state"), py::arg("reference"), py::arg("x"), py::arg("y"), py::arg("xi") = 2.0);

  m.def("single_impurity_probability", &interferometry::run_single_impurity_sequence,
        py::arg("phase_first_half"), py::arg("phase_second_half"));
  m.def(
      "two_impurity_probability",
      [](cdouble direct, cdouble exchange, cdouble both_to_3, cdouble both_to_4) {
        return interferometry::run_two_impurity_sequence({direct, exchange, both_to_3, both_to_4});
      },
      py::arg("direct") = cdouble{1.0}, py::arg("exchange") = cdouble{1.0}, py::arg("both_to_3") = cdouble{1.0},
      py::arg("both_to_4") = cdouble{1.0});
  m.def(
      "nonabelian_probability",
      [](double magnitude, double phase) { return interferometry::nonabelian_probability({magnitude, phase}); },
      py::arg("magnitude"), py::arg("phase"));

  m.def(
      "list_presets",
      [](std::optional<std::filesystem::path> dir) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const PresetInfo& p : list_presets(dir)) out.emplace_back(p.name, p.description);
        return out;
      },
      py::arg("preset_dir") = std::nullopt);

  m.def(
      "run",
      [](const std::string& config_json, int jobs, std::optional<std::filesystem::path> preset_dir) {
        const RunConfig config = parse_run_config(config_json, preset_dir);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_experiments(config, {jobs});
        }
        py::dict out;
        out["results_csv"] = results_csv(r);
        out["densities_csv"] = densities_csv(r);
        out["summary_json"] = summary_json(config, r);
        out["failures"] = r.failures.size();
        return out;
      },
      py::arg("config_json"), py::arg("jobs") = 0, py::arg("preset_dir") = std::nullopt,
      "Runs a JSON configuration; returns the CSV and JSON texts the command-line tool writes.");
}
