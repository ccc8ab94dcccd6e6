#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chernbraid/analysis.hpp"
#include "chernbraid/errors.hpp"
#include "chernbraid/geomphase.hpp"
#include "chernbraid/lattice.hpp"

namespace chernbraid {

enum class ExperimentKind {
  SingleLoopAB,         // one pin around a full circle; fits q* per radius
  Exchange,             // two-pin half-loop exchange, phi_exc against an AB loop
  ChargeOperator,       // static pins, envelope charge and density maps
  InterferometryCheck,  // exchange pipeline fed into the Ramsey sequences
};

std::string to_string(ExperimentKind kind);

struct ExperimentConfig {
  std::string id;
  ExperimentKind kind = ExperimentKind::SingleLoopAB;
  bool projected = false;  // restrict to the lowest band of the pin-free lattice
  bool projector_includes_defect = true;  // band taken from H_free with delta_phi threaded

  int Lx = 15;
  int Ly = 15;
  double alpha = 0.0;
  std::optional<std::vector<Plaquette>> defect_plaquettes;  // central 2x2 block if unset

  PinSpec pin{{0.0, 0.0}, -1.0, 1.0};  // center ignored; strength and width used
  int N = 1;

  std::vector<double> radii;
  std::vector<double> delta_phis{0.0};
  int n_steps = 40;
  double start_angle = 0.0;

  Unwrapping unwrapping = Unwrapping::None;  // Radial tiles the first delta_phi of each radius
  double ring_spacing = 0.5;

  // Exchange / interferometry: AB loops come from another experiment of the
  // same run when set, otherwise they are computed here with ab_n_steps.
  std::optional<std::string> ab_from;
  int ab_n_steps = 0;  // 0: same as n_steps

  // Charge operator
  double xi = 2.0;
  std::vector<Vec2> pin_offsets;  // relative to the lattice center

  std::string preset;  // preset the experiment came from, if any

  /// Throws InvalidArgument on any inconsistency.
  void validate() const;
  LatticeSpec lattice(double delta_phi) const;
};

struct RunConfig {
  std::vector<ExperimentConfig> experiments;
  std::string source_text;  // canonical JSON used for the provenance hash
};

/// Parses a run configuration: an object with "experiments" and/or "presets"
/// (or a single "preset"). Throws InvalidArgument on malformed input and
/// UnknownPreset on an unknown preset name.
RunConfig parse_run_config(const std::string& json_text,
                           const std::optional<std::filesystem::path>& preset_dir = std::nullopt);

class UnknownPreset : public InvalidArgument {
 public:
  UnknownPreset(const std::string& name, const std::string& suggestion);
  const std::string& name() const { return name_; }
  const std::string& suggestion() const { return suggestion_; }

 private:
  std::string name_, suggestion_;
};

struct PresetInfo {
  std::string name;
  std::string description;
  bool builtin = true;
};

/// Built-in presets followed by *.json files found in `preset_dir`.
std::vector<PresetInfo> list_presets(const std::optional<std::filesystem::path>& preset_dir = std::nullopt);

/// Experiments of a preset; throws UnknownPreset.
std::vector<ExperimentConfig> expand_preset(const std::string& name,
                                            const std::optional<std::filesystem::path>& preset_dir = std::nullopt);

struct ResultRow {
  std::string experiment;
  ExperimentKind kind{};
  double R = 0.0;
  double delta_phi = 0.0;
  double phi_unwrapped = 0.0;
  double phi_mod = 0.0;
  double min_mag = 0.0;
  bool reliable = true;
  std::optional<double> q_star;
  std::optional<double> phi_ab;
  std::optional<double> phi_exc;
  std::optional<double> charge;
  std::optional<double> p_up;
  std::optional<double> p_upup;
};

struct DensityRow {
  std::string experiment;
  double delta_phi = 0.0;
  int x = 0, y = 0;
  double density = 0.0;
  double reference = 0.0;
};

struct FitSummary {
  std::string experiment;
  std::string source;  // "phi_ab" or "phi_geo"
  double R = 0.0;
  ChargeFit fit;
};

struct ChargeSample {
  std::string experiment;
  double delta_phi = 0.0;
  Vec2 pin;
  double charge = 0.0;
};

struct StepFailure {
  std::string experiment;
  double R = 0.0;
  double delta_phi = 0.0;
  std::string message;
  std::optional<int> step;
};

struct RunResult {
  std::vector<ResultRow> rows;  // sorted by experiment order, R, delta_phi
  std::vector<DensityRow> densities;
  std::vector<FitSummary> fits;
  std::vector<ChargeSample> charges;
  std::vector<StepFailure> failures;
  std::map<std::string, std::map<std::string, double>> diagnostics;  // per experiment
  std::map<std::string, double> seconds;  // per experiment, summed over its tasks
};

struct RunOptions {
  int jobs = 0;  // 0: hardware concurrency
};

/// Executes every experiment; step failures are collected, not thrown.
RunResult run_experiments(const RunConfig& config, const RunOptions& options = {});

/// results.csv text: header row, 12 significant digits, '.' decimal point.
std::string results_csv(const RunResult& result);
std::string densities_csv(const RunResult& result);
/// summary.json text (fits, diagnostics, provenance).
std::string summary_json(const RunConfig& config, const RunResult& result);

/// 64-bit FNV-1a of the canonical configuration, hex encoded.
std::string config_hash(const RunConfig& config);

}  // namespace chernbraid
