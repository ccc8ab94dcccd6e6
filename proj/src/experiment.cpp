#include "chernbraid/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "chernbraid/interferometry.hpp"
#include "chernbraid/manybody.hpp"

extern "C" void openblas_set_num_threads(int);

namespace chernbraid {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr double kPi = std::numbers::pi;
// Exchange rows are flagged when any step overlap falls below this.
constexpr double kMinStepOverlap = 0.5;
constexpr double kAlignmentFloor = 1e-6;

// ---------------------------------------------------------------- parsing

ExperimentKind parse_kind(std::string name, bool& projected) {
  const std::string suffix = "_projected";
  if (name.size() > suffix.size() && name.ends_with(suffix)) {
    projected = true;
    name.resize(name.size() - suffix.size());
  }
  if (name == "single_loop_ab") return ExperimentKind::SingleLoopAB;
  if (name == "exchange") return ExperimentKind::Exchange;
  if (name == "charge_operator") return ExperimentKind::ChargeOperator;
  if (name == "interferometry_check") return ExperimentKind::InterferometryCheck;
  throw InvalidArgument("unknown experiment kind '" + name + "'");
}

std::string kind_label(const ExperimentConfig& e) {
  return to_string(e.kind) + (e.projected ? "_projected" : "");
}

void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw InvalidArgument("unknown key '" + key + "' in " + where);
  }
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw InvalidArgument(what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw InvalidArgument(what + " must be finite");
  return v;
}

int integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) throw InvalidArgument(what + " must be an integer");
  return j.get<int>();
}

std::vector<double> numbers(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidArgument(what + " must be an array");
  std::vector<double> out;
  for (const json& v : j) out.push_back(number(v, what));
  return out;
}

Vec2 pair_of(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument(what + " entries must be [x, y]");
  return {number(j[0], what), number(j[1], what)};
}

ExperimentConfig experiment_from_json(const json& j) {
  require_keys(j,
               {"id", "kind", "projected", "lattice", "pin", "N", "radii", "delta_phi", "n_steps",
                "start_angle", "unwrapping", "ring_spacing", "ab_from", "ab_n_steps", "xi",
                "pin_offsets", "projector_includes_defect"},
               "experiment");
  ExperimentConfig e;
  if (!j.contains("id") || !j["id"].is_string()) throw InvalidArgument("experiment needs a string 'id'");
  e.id = j["id"].get<std::string>();
  const std::string where = "experiment '" + e.id + "'";
  if (!j.contains("kind") || !j["kind"].is_string()) throw InvalidArgument(where + " needs a string 'kind'");
  e.kind = parse_kind(j["kind"].get<std::string>(), e.projected);
  if (j.contains("projected")) {
    if (!j["projected"].is_boolean()) throw InvalidArgument("'projected' must be a boolean");
    e.projected = e.projected || j["projected"].get<bool>();
  }
  if (j.contains("projector_includes_defect")) {
    if (!j["projector_includes_defect"].is_boolean())
      throw InvalidArgument("'projector_includes_defect' must be a boolean");
    e.projector_includes_defect = j["projector_includes_defect"].get<bool>();
  }
  if (j.contains("lattice")) {
    const json& l = j["lattice"];
    require_keys(l, {"Lx", "Ly", "alpha", "defect_plaquettes"}, where + " lattice");
    if (l.contains("Lx")) e.Lx = integer(l["Lx"], "Lx");
    if (l.contains("Ly")) e.Ly = integer(l["Ly"], "Ly");
    if (l.contains("alpha")) e.alpha = number(l["alpha"], "alpha");
    if (l.contains("defect_plaquettes")) {
      if (!l["defect_plaquettes"].is_array()) throw InvalidArgument("defect_plaquettes must be an array");
      std::vector<Plaquette> ps;
      for (const json& p : l["defect_plaquettes"]) {
        if (!p.is_array() || p.size() != 2) throw InvalidArgument("defect plaquettes must be [x, y]");
        ps.push_back({integer(p[0], "plaquette x"), integer(p[1], "plaquette y")});
      }
      e.defect_plaquettes = std::move(ps);
    }
  }
  if (j.contains("pin")) {
    const json& p = j["pin"];
    require_keys(p, {"strength", "width"}, where + " pin");
    if (p.contains("strength")) e.pin.strength = number(p["strength"], "pin strength");
    if (p.contains("width")) e.pin.width = number(p["width"], "pin width");
  }
  if (j.contains("N")) e.N = integer(j["N"], "N");
  if (j.contains("radii")) e.radii = numbers(j["radii"], "radii");
  if (j.contains("delta_phi")) e.delta_phis = numbers(j["delta_phi"], "delta_phi");
  if (j.contains("n_steps")) e.n_steps = integer(j["n_steps"], "n_steps");
  if (j.contains("start_angle")) e.start_angle = number(j["start_angle"], "start_angle");
  if (j.contains("unwrapping")) {
    const std::string u = j["unwrapping"].is_string() ? j["unwrapping"].get<std::string>() : "";
    if (u == "none")
      e.unwrapping = Unwrapping::None;
    else if (u == "radial")
      e.unwrapping = Unwrapping::Radial;
    else
      throw InvalidArgument("unwrapping must be \"none\" or \"radial\"");
  }
  if (j.contains("ring_spacing")) e.ring_spacing = number(j["ring_spacing"], "ring_spacing");
  if (j.contains("ab_from")) {
    if (!j["ab_from"].is_string()) throw InvalidArgument("ab_from must be a string");
    e.ab_from = j["ab_from"].get<std::string>();
  }
  if (j.contains("ab_n_steps")) e.ab_n_steps = integer(j["ab_n_steps"], "ab_n_steps");
  if (j.contains("xi")) e.xi = number(j["xi"], "xi");
  if (j.contains("pin_offsets")) {
    if (!j["pin_offsets"].is_array()) throw InvalidArgument("pin_offsets must be an array");
    for (const json& p : j["pin_offsets"]) e.pin_offsets.push_back(pair_of(p, "pin_offsets"));
  }
  return e;
}

ojson experiment_to_json(const ExperimentConfig& e) {
  ojson j;
  j["id"] = e.id;
  j["kind"] = kind_label(e);
  if (e.projected) j["projector_includes_defect"] = e.projector_includes_defect;
  ojson lat;
  lat["Lx"] = e.Lx;
  lat["Ly"] = e.Ly;
  lat["alpha"] = e.alpha;
  if (e.defect_plaquettes) {
    ojson ps = ojson::array();
    for (const Plaquette& p : *e.defect_plaquettes) ps.push_back({p.x, p.y});
    lat["defect_plaquettes"] = ps;
  }
  j["lattice"] = lat;
  j["pin"] = {{"strength", e.pin.strength}, {"width", e.pin.width}};
  j["N"] = e.N;
  if (e.kind == ExperimentKind::ChargeOperator) {
    ojson offs = ojson::array();
    for (const Vec2& v : e.pin_offsets) offs.push_back({v.x, v.y});
    j["pin_offsets"] = offs;
    j["xi"] = e.xi;
  } else {
    j["radii"] = e.radii;
    j["n_steps"] = e.n_steps;
    j["start_angle"] = e.start_angle;
    j["unwrapping"] = e.unwrapping == Unwrapping::Radial ? "radial" : "none";
    j["ring_spacing"] = e.ring_spacing;
  }
  j["delta_phi"] = e.delta_phis;
  if (e.ab_from) j["ab_from"] = *e.ab_from;
  if (e.ab_n_steps > 0) j["ab_n_steps"] = e.ab_n_steps;
  return j;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// ---------------------------------------------------------------- presets

std::vector<double> grid(double first, double step, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(std::round((first + step * i) * 1e12) / 1e12);
  return out;
}

ExperimentConfig base(const std::string& preset, const std::string& id, ExperimentKind kind) {
  ExperimentConfig e;
  e.preset = preset;
  e.id = id;
  e.kind = kind;
  return e;
}

std::vector<ExperimentConfig> preset_fig2() {
  std::vector<ExperimentConfig> out;
  for (double V : {-5.0, -1.5}) {
    char id[32];
    std::snprintf(id, sizeof id, "fig2_V%.1f", V);
    ExperimentConfig e = base("fig2", id, ExperimentKind::SingleLoopAB);
    e.pin.strength = V;
    e.radii = {1, 2, 3, 4, 5, 6};
    e.delta_phis = grid(0.0, 0.04, 9);
    out.push_back(e);
  }
  return out;
}

std::vector<ExperimentConfig> preset_fig3() {
  ExperimentConfig ab = base("fig3", "fig3_ab", ExperimentKind::SingleLoopAB);
  ab.alpha = 0.2;
  ab.pin.strength = -1.0;
  ab.radii = grid(2.0, 0.5, 10);
  ab.delta_phis = grid(0.0, 0.02, 5);
  ab.unwrapping = Unwrapping::Radial;
  ExperimentConfig ex = ab;
  ex.id = "fig3_exchange";
  ex.kind = ExperimentKind::Exchange;
  ex.N = 2;
  ex.unwrapping = Unwrapping::None;
  ex.ab_from = "fig3_ab";
  return {ab, ex};
}

ExperimentConfig chern(const std::string& preset, const std::string& id, ExperimentKind kind) {
  ExperimentConfig e = base(preset, id, kind);
  e.alpha = 0.2;
  e.pin.strength = 1.5;
  e.N = 35;
  e.delta_phis = grid(0.0, 0.02, 5);
  return e;
}

std::vector<ExperimentConfig> preset_charge(const std::string& preset, bool projected) {
  ExperimentConfig one = chern(preset, preset + "_one_pin", ExperimentKind::ChargeOperator);
  one.delta_phis = {0.0};
  one.pin_offsets = {{3.5, 0.0}};
  one.projected = projected;
  ExperimentConfig two = one;
  two.id = preset + "_two_pins";
  two.pin_offsets = {{3.5, 0.0}, {-3.5, 0.0}};
  return {one, two};
}

std::vector<ExperimentConfig> preset_chern_loops(const std::string& preset, bool projected) {
  ExperimentConfig ab = chern(preset, preset + "_ab", ExperimentKind::SingleLoopAB);
  ab.radii = grid(2.5, 0.5, 6);
  ab.n_steps = 80;
  ab.unwrapping = Unwrapping::Radial;
  ab.projected = projected;
  ExperimentConfig ex = ab;
  ex.id = preset + "_exchange";
  ex.kind = ExperimentKind::Exchange;
  ex.n_steps = 40;
  ex.unwrapping = Unwrapping::None;
  ex.ab_from = ab.id;
  return {ab, ex};
}

std::vector<ExperimentConfig> preset_fig6() {
  auto out = preset_chern_loops("fig6", false);
  for (auto& e : out) {
    e.Lx = e.Ly = 21;
    e.N = 70;
    e.pin.strength = 0.8;
    e.radii = {3, 4, 5, 6};
  }
  return out;
}

std::vector<ExperimentConfig> preset_interferometry() {
  ExperimentConfig e = base("interferometry", "interferometry_two_fermions", ExperimentKind::InterferometryCheck);
  e.alpha = 0.2;
  e.N = 2;
  e.radii = {3.0, 3.5, 4.0};
  e.delta_phis = {0.0, 0.04};
  return {e};
}

struct Builtin {
  PresetInfo info;
  std::function<std::vector<ExperimentConfig>()> make;
};

const std::vector<Builtin>& builtins() {
  static const std::vector<Builtin> table{
      {{"fig2", "single particle around a local flux, alpha=0, V=-5 and -1.5"}, preset_fig2},
      {{"fig3", "single particle and two-fermion exchange, alpha=0.2, V=-1"}, preset_fig3},
      {{"fig4", "Chern insulator N=35: pinned charge and density maps"},
       [] { return preset_charge("fig4", false); }},
      {{"fig5", "Chern insulator N=35: AB loops and hole exchange, V=1.5"},
       [] { return preset_chern_loops("fig5", false); }},
      {{"fig6", "Chern insulator N=70 on 21x21: AB loops and exchange, V=0.8"}, preset_fig6},
      {{"figS1", "fig4 densities restricted to the lowest band"},
       [] { return preset_charge("figS1", true); }},
      {{"figS2", "fig5 pipeline restricted to the lowest band"},
       [] { return preset_chern_loops("figS2", true); }},
      {{"interferometry", "two-fermion exchange phases fed into the Ramsey sequences"},
       preset_interferometry},
  };
  return table;
}

std::vector<std::filesystem::path> custom_preset_files(const std::optional<std::filesystem::path>& dir) {
  std::vector<std::filesystem::path> out;
  if (!dir || !std::filesystem::is_directory(*dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(*dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- running

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

template <class F>
void parallel_for(int n, int jobs, F&& body) {
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int i; (i = next++) < n;) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (int k = 1; k < std::min(jobs, n); ++k) pool.emplace_back(work);
  work();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

enum class TaskType { Loop, Exchange, Charge };

struct Task {
  TaskType type;
  int exp;  // experiment owning the result
  int r;    // index into its sorted radii
  int d;    // index into its sorted delta_phis
  double cost;
};

struct TaskOut {
  std::optional<PhaseRecord> record;
  std::optional<StepFailure> failure;
  std::vector<double> charges;
  DensityField density, reference;
  double seconds = 0.0;
};

struct Plan {
  std::vector<std::vector<double>> radii, dphis;  // sorted per experiment
  std::vector<int> ab_owner;                       // experiment holding the AB loops
  std::vector<int> ab_steps;
};

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::SingleLoopAB: return "single_loop_ab";
    case ExperimentKind::Exchange: return "exchange";
    case ExperimentKind::ChargeOperator: return "charge_operator";
    case ExperimentKind::InterferometryCheck: return "interferometry_check";
  }
  return "unknown";
}

UnknownPreset::UnknownPreset(const std::string& name, const std::string& suggestion)
    : InvalidArgument("unknown preset '" + name + "'" +
                      (suggestion.empty() ? std::string{} : "; did you mean '" + suggestion + "'?")),
      name_(name),
      suggestion_(suggestion) {}

LatticeSpec ExperimentConfig::lattice(double delta_phi) const {
  LatticeSpec s = LatticeSpec::make(Lx, Ly, alpha, delta_phi);
  if (defect_plaquettes) s.defect.plaquettes = *defect_plaquettes;
  return s;
}

void ExperimentConfig::validate() const {
  const std::string where = "experiment '" + id + "': ";
  if (id.empty()) throw InvalidArgument("experiment id must not be empty");
  if (id.find_first_of(",\"\n") != std::string::npos) throw InvalidArgument(where + "id contains , \" or newline");
  if (Lx < 2 || Ly < 2) throw InvalidArgument(where + "lattice must be at least 2x2");
  if (!std::isfinite(alpha)) throw InvalidArgument(where + "alpha must be finite");
  if (!(pin.width > 0.0) || !std::isfinite(pin.width) || !std::isfinite(pin.strength))
    throw InvalidArgument(where + "pin needs finite strength and positive width");
  if (N < 1 || N >= Lx * Ly) throw InvalidArgument(where + "N must lie in [1, Lx*Ly)");
  if (delta_phis.empty()) throw InvalidArgument(where + "delta_phi list is empty");
  for (double d : delta_phis)
    if (!std::isfinite(d)) throw InvalidArgument(where + "delta_phi must be finite");
  lattice(0.0).validated();

  const Vec2 c = lattice(0.0).center();
  if (kind == ExperimentKind::ChargeOperator) {
    if (pin_offsets.empty()) throw InvalidArgument(where + "charge_operator needs pin_offsets");
    for (const Vec2& o : pin_offsets)
      if (c.x + o.x < 0 || c.x + o.x > Lx - 1 || c.y + o.y < 0 || c.y + o.y > Ly - 1)
        throw InvalidArgument(where + "pin offset outside the lattice");
    if (!(xi > 0.0)) throw InvalidArgument(where + "xi must be positive");
    if (ab_from) throw InvalidArgument(where + "ab_from only applies to exchange experiments");
    return;
  }
  if (n_steps < 8) throw InvalidArgument(where + "n_steps must be at least 8");
  if (ab_n_steps != 0 && ab_n_steps < 8) throw InvalidArgument(where + "ab_n_steps must be at least 8");
  if (radii.empty()) throw InvalidArgument(where + "radii list is empty");
  for (double R : radii) {
    if (!(R > 0.0) || !std::isfinite(R)) throw InvalidArgument(where + "radii must be positive");
    if (c.x - R < 0 || c.x + R > Lx - 1 || c.y - R < 0 || c.y + R > Ly - 1)
      throw InvalidArgument(where + "circle of radius " + std::to_string(R) + " leaves the lattice");
  }
  if (!(ring_spacing > 0.0)) throw InvalidArgument(where + "ring_spacing must be positive");
  if (ab_from && kind == ExperimentKind::SingleLoopAB)
    throw InvalidArgument(where + "ab_from only applies to exchange experiments");
}

std::vector<PresetInfo> list_presets(const std::optional<std::filesystem::path>& preset_dir) {
  std::vector<PresetInfo> out;
  for (const Builtin& b : builtins()) out.push_back(b.info);
  for (const auto& p : custom_preset_files(preset_dir))
    out.push_back({p.stem().string(), "custom preset " + p.filename().string(), false});
  return out;
}

std::vector<ExperimentConfig> expand_preset(const std::string& name,
                                            const std::optional<std::filesystem::path>& preset_dir) {
  for (const Builtin& b : builtins())
    if (b.info.name == name) return b.make();
  for (const auto& p : custom_preset_files(preset_dir)) {
    if (p.stem().string() != name) continue;
    RunConfig rc = parse_run_config(read_file(p), std::nullopt);
    for (auto& e : rc.experiments)
      if (e.preset.empty()) e.preset = name;
    return rc.experiments;
  }
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const PresetInfo& info : list_presets(preset_dir)) {
    const std::size_t d = edit_distance(name, info.name);
    if (d < best_d) {
      best_d = d;
      best = info.name;
    }
  }
  throw UnknownPreset(name, best_d <= std::max<std::size_t>(2, name.size() / 2) ? best : "");
}

RunConfig parse_run_config(const std::string& json_text,
                           const std::optional<std::filesystem::path>& preset_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  require_keys(root, {"experiments", "presets", "preset", "description"}, "config");

  RunConfig rc;
  std::vector<std::string> names;
  if (root.contains("preset")) {
    if (!root["preset"].is_string()) throw InvalidArgument("'preset' must be a string");
    names.push_back(root["preset"].get<std::string>());
  }
  if (root.contains("presets")) {
    if (!root["presets"].is_array()) throw InvalidArgument("'presets' must be an array of names");
    for (const json& n : root["presets"]) {
      if (!n.is_string()) throw InvalidArgument("'presets' must be an array of names");
      names.push_back(n.get<std::string>());
    }
  }
  for (const std::string& n : names)
    for (auto& e : expand_preset(n, preset_dir)) rc.experiments.push_back(std::move(e));
  if (root.contains("experiments")) {
    if (!root["experiments"].is_array()) throw InvalidArgument("'experiments' must be an array");
    for (const json& j : root["experiments"]) rc.experiments.push_back(experiment_from_json(j));
  }
  if (rc.experiments.empty()) throw InvalidArgument("config defines no experiments");

  std::set<std::string> ids;
  for (const auto& e : rc.experiments) {
    e.validate();
    if (!ids.insert(e.id).second) throw InvalidArgument("duplicate experiment id '" + e.id + "'");
  }
  for (const auto& e : rc.experiments) {
    if (!e.ab_from) continue;
    const auto it = std::find_if(rc.experiments.begin(), rc.experiments.end(),
                                 [&](const ExperimentConfig& o) { return o.id == *e.ab_from; });
    if (it == rc.experiments.end())
      throw InvalidArgument("experiment '" + e.id + "': ab_from '" + *e.ab_from + "' not found");
    if (it->kind != ExperimentKind::SingleLoopAB)
      throw InvalidArgument("experiment '" + e.id + "': ab_from must name a single_loop_ab experiment");
    for (double R : e.radii)
      if (std::find(it->radii.begin(), it->radii.end(), R) == it->radii.end())
        throw InvalidArgument("experiment '" + e.id + "': radius missing from '" + it->id + "'");
    for (double d : e.delta_phis)
      if (std::find(it->delta_phis.begin(), it->delta_phis.end(), d) == it->delta_phis.end())
        throw InvalidArgument("experiment '" + e.id + "': delta_phi missing from '" + it->id + "'");
  }

  ojson canon = ojson::array();
  for (const auto& e : rc.experiments) canon.push_back(experiment_to_json(e));
  rc.source_text = canon.dump();
  return rc;
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : config.source_text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunResult run_experiments(const RunConfig& config, const RunOptions& options) {
  const auto& exps = config.experiments;
  const int n_exp = static_cast<int>(exps.size());
  const int jobs = options.jobs > 0 ? options.jobs
                                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  openblas_set_num_threads(1);

  Plan plan;
  for (const auto& e : exps) {
    plan.radii.push_back(sorted_unique(e.radii));
    plan.dphis.push_back(sorted_unique(e.delta_phis));
  }
  auto index_of = [&](const std::string& id) {
    for (int i = 0; i < n_exp; ++i)
      if (exps[i].id == id) return i;
    throw InvalidArgument("experiment '" + id + "' not found");
  };
  for (int i = 0; i < n_exp; ++i) {
    plan.ab_owner.push_back(exps[i].ab_from ? index_of(*exps[i].ab_from) : i);
    const auto& owner = exps[plan.ab_owner[i]];
    plan.ab_steps.push_back(exps[i].ab_from ? owner.n_steps
                                            : (exps[i].ab_n_steps > 0 ? exps[i].ab_n_steps : exps[i].n_steps));
  }

  // Band projectors, one per (experiment, delta_phi).
  std::vector<std::vector<std::optional<BandProjector>>> projectors(n_exp);
  std::vector<std::pair<int, int>> proj_jobs;
  for (int i = 0; i < n_exp; ++i) {
    projectors[i].resize(plan.dphis[i].size());
    if (exps[i].projected)
      for (int d = 0; d < static_cast<int>(plan.dphis[i].size()); ++d) proj_jobs.emplace_back(i, d);
  }
  parallel_for(static_cast<int>(proj_jobs.size()), jobs, [&](int k) {
    const auto [i, d] = proj_jobs[k];
    const double dphi = exps[i].projector_includes_defect ? plan.dphis[i][d] : 0.0;
    projectors[i][d] = lowest_band_projector(build_hamiltonian(exps[i].lattice(dphi)));
  });

  std::vector<Task> tasks;
  for (int i = 0; i < n_exp; ++i) {
    const auto& e = exps[i];
    const int nr = static_cast<int>(plan.radii[i].size());
    const int nd = static_cast<int>(plan.dphis[i].size());
    const double size = static_cast<double>(e.Lx * e.Ly) * e.Lx * e.Ly * (e.N + 1);
    if (e.kind == ExperimentKind::ChargeOperator) {
      for (int d = 0; d < nd; ++d) tasks.push_back({TaskType::Charge, i, 0, d, size});
      continue;
    }
    const bool own_loops = e.kind == ExperimentKind::SingleLoopAB || !e.ab_from;
    for (int r = 0; r < nr; ++r)
      for (int d = 0; d < nd; ++d) {
        if (own_loops) {
          const double rings = e.unwrapping == Unwrapping::Radial && d == 0
                                   ? std::ceil(plan.radii[i][r] / e.ring_spacing) : 1.0;
          tasks.push_back({TaskType::Loop, i, r, d, size * plan.ab_steps[i] * rings});
        }
        if (e.kind != ExperimentKind::SingleLoopAB)
          tasks.push_back({TaskType::Exchange, i, r, d, size * e.n_steps});
      }
  }
  std::vector<int> order(tasks.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return tasks[a].cost > tasks[b].cost; });

  std::vector<TaskOut> outs(tasks.size());
  parallel_for(static_cast<int>(order.size()), jobs, [&](int k) {
    const Task& t = tasks[order[k]];
    TaskOut& out = outs[order[k]];
    const auto& e = exps[t.exp];
    const double dphi = plan.dphis[t.exp][t.d];
    const LatticeSpec spec = e.lattice(dphi);
    const BandProjector* proj = projectors[t.exp][t.d] ? &*projectors[t.exp][t.d] : nullptr;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (t.type == TaskType::Charge) {
        std::vector<PinSpec> pins;
        for (const Vec2& o : e.pin_offsets) {
          PinSpec p = e.pin;
          p.center = {spec.center().x + o.x, spec.center().y + o.y};
          pins.push_back(p);
        }
        const SlaterState state = pinned_ground_state(spec, pins, e.N, proj);
        const SlaterState free = pinned_ground_state(spec, {}, e.N, proj);
        out.density = density(state);
        out.reference = density(free);
        for (const PinSpec& p : pins) out.charges.push_back(charge_expectation(spec, state, out.reference, p.center, e.xi));
      } else {
        PathPlan path;
        path.center = spec.center();
        path.radius = plan.radii[t.exp][t.r];
        path.start_angle = e.start_angle;
        SweepOptions so;
        so.projector = proj;
        so.ring_spacing = e.ring_spacing;
        if (t.type == TaskType::Loop) {
          path.kind = PathKind::SingleLoop;
          path.n_steps = plan.ab_steps[t.exp];
          so.unwrapping = t.d == 0 ? e.unwrapping : Unwrapping::None;
        } else {
          path.kind = PathKind::ExchangeHalfLoop;
          path.n_steps = e.n_steps;
        }
        out.record = sweep(spec, e.pin, path, e.N, so);
      }
    } catch (const SweepStepError& err) {
      out.failure = StepFailure{e.id, t.type == TaskType::Charge ? 0.0 : plan.radii[t.exp][t.r], dphi,
                                err.what(), err.step()};
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  RunResult result;
  // Lookup of finished loop and exchange records.
  auto find = [&](TaskType type, int exp, int r, int d) -> const TaskOut* {
    for (std::size_t k = 0; k < tasks.size(); ++k)
      if (tasks[k].type == type && tasks[k].exp == exp && tasks[k].r == r && tasks[k].d == d) return &outs[k];
    return nullptr;
  };
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    result.seconds[exps[tasks[k].exp].id] += outs[k].seconds;
    if (outs[k].failure) result.failures.push_back(*outs[k].failure);
  }

  // Continuity-unwrapped AB series of one radius: the first delta_phi carries
  // the absolute branch, the rest follow it.
  struct Series {
    std::vector<int> d;
    std::vector<double> phi;
    std::vector<bool> reliable;
  };
  auto loop_series = [&](int owner, int r) {
    Series s;
    std::vector<double> raw;
    bool chain_ok = true;
    for (int d = 0; d < static_cast<int>(plan.dphis[owner].size()); ++d) {
      const TaskOut* o = find(TaskType::Loop, owner, r, d);
      if (!o || !o->record) {
        chain_ok = false;
        continue;
      }
      raw.push_back(s.d.empty() ? o->record->phi_unwrapped : o->record->phi_mod);
      s.d.push_back(d);
      s.reliable.push_back(s.d.size() == 1 ? o->record->reliable : chain_ok);
    }
    s.phi = unwrap_sequence(raw);
    for (std::size_t k = 1; k < s.phi.size(); ++k) {
      const bool smooth = std::abs(s.phi[k] - s.phi[k - 1]) < kPi / 2.0;
      s.reliable[k] = s.reliable[k] && s.reliable[k - 1] && smooth;
    }
    return s;
  };
  auto fit_series = [&](int exp, const std::vector<int>& ds, const std::vector<double>& phi) -> std::optional<ChargeFit> {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < ds.size(); ++k) pts.emplace_back(plan.dphis[exp][ds[k]], phi[k]);
    if (pts.size() < 2) return std::nullopt;
    return fit_charge(pts);
  };

  for (int i = 0; i < n_exp; ++i) {
    const auto& e = exps[i];
    auto& diag = result.diagnostics[e.id];
    if (e.projected && !projectors[i].empty() && projectors[i][0])
      diag["projector_dimension"] = projectors[i][0]->dimension();
    double min_overlap = 1.0;
    int unreliable = 0;
    std::vector<ResultRow> rows;

    if (e.kind == ExperimentKind::ChargeOperator) {
      for (int d = 0; d < static_cast<int>(plan.dphis[i].size()); ++d) {
        const TaskOut* o = find(TaskType::Charge, i, 0, d);
        if (!o || o->charges.empty()) continue;
        const double dphi = plan.dphis[i][d];
        const Vec2 c = e.lattice(dphi).center();
        ResultRow row;
        row.experiment = e.id;
        row.kind = e.kind;
        row.R = std::hypot(e.pin_offsets[0].x, e.pin_offsets[0].y);
        row.delta_phi = dphi;
        row.charge = o->charges[0];
        rows.push_back(row);
        for (std::size_t p = 0; p < o->charges.size(); ++p)
          result.charges.push_back({e.id, dphi, {c.x + e.pin_offsets[p].x, c.y + e.pin_offsets[p].y}, o->charges[p]});
        for (int s = 0; s < e.Lx * e.Ly; ++s)
          result.densities.push_back({e.id, dphi, s % e.Lx, s / e.Lx, o->density[s], o->reference[s]});
      }
      diag["magnetic_length"] = magnetic_length(e.alpha);
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());
      continue;
    }

    double max_p_up_dev = 0.0, max_p_upup_dev = 0.0, max_nonabelian_dev = 0.0;
    for (int r = 0; r < static_cast<int>(plan.radii[i].size()); ++r) {
      const double R = plan.radii[i][r];
      const int owner = plan.ab_owner[i];
      const int owner_r = static_cast<int>(
          std::find(plan.radii[owner].begin(), plan.radii[owner].end(), R) - plan.radii[owner].begin());
      const Series ab = loop_series(owner, owner_r);
      auto ab_at = [&](double dphi) -> std::optional<std::pair<double, bool>> {
        for (std::size_t k = 0; k < ab.d.size(); ++k)
          if (plan.dphis[owner][ab.d[k]] == dphi) return std::make_pair(ab.phi[k], bool(ab.reliable[k]));
        return std::nullopt;
      };

      if (e.kind == ExperimentKind::SingleLoopAB) {
        const auto fit = fit_series(i, ab.d, ab.phi);
        if (fit) result.fits.push_back({e.id, "phi_ab", R, *fit});
        for (std::size_t k = 0; k < ab.d.size(); ++k) {
          const PhaseRecord& rec = *find(TaskType::Loop, i, r, ab.d[k])->record;
          ResultRow row;
          row.experiment = e.id;
          row.kind = e.kind;
          row.R = R;
          row.delta_phi = plan.dphis[i][ab.d[k]];
          row.phi_unwrapped = ab.phi[k];
          row.phi_mod = rec.phi_mod;
          row.min_mag = rec.min_mag;
          row.reliable = ab.reliable[k];
          if (fit) row.q_star = fit->q_star;
          min_overlap = std::min(min_overlap, rec.min_mag);
          unreliable += !row.reliable;
          rows.push_back(row);
        }
        continue;
      }

      if (!e.ab_from) {
        const auto fit = fit_series(i, ab.d, ab.phi);
        if (fit) result.fits.push_back({e.id, "phi_ab", R, *fit});
      }
      std::vector<int> ds;
      std::vector<double> geo_raw;
      std::vector<ResultRow> partial;
      for (int d = 0; d < static_cast<int>(plan.dphis[i].size()); ++d) {
        const TaskOut* o = find(TaskType::Exchange, i, r, d);
        const double dphi = plan.dphis[i][d];
        const auto abv = ab_at(dphi);
        if (!o || !o->record || !abv) continue;
        const PhaseRecord& rec = *o->record;
        ResultRow row;
        row.experiment = e.id;
        row.kind = e.kind;
        row.R = R;
        row.delta_phi = dphi;
        row.phi_mod = rec.phi_mod;
        row.min_mag = rec.min_mag;
        row.phi_ab = abv->first;
        row.phi_exc = exchange_phase(rec.phi_mod, abv->first);
        row.reliable = abv->second && rec.min_mag >= kMinStepOverlap;
        ds.push_back(d);
        geo_raw.push_back(abv->first + *row.phi_exc);
        min_overlap = std::min(min_overlap, rec.min_mag);
        unreliable += !row.reliable;
        partial.push_back(row);
      }
      const std::vector<double> geo = unwrap_sequence(geo_raw);
      const auto fit = fit_series(i, ds, geo);
      if (fit) result.fits.push_back({e.id, "phi_geo", R, *fit});
      for (std::size_t k = 0; k < partial.size(); ++k) {
        ResultRow& row = partial[k];
        row.phi_unwrapped = geo[k];
        if (fit) row.q_star = fit->q_star;
        if (e.kind == ExperimentKind::InterferometryCheck) {
          using namespace interferometry;
          row.p_up = run_single_impurity_sequence(*row.phi_ab, 0.0);
          TwoImpurityFactors f;
          f.exchange = std::polar(1.0, row.phi_mod);
          row.p_upup = run_two_impurity_sequence(f);
          max_p_up_dev = std::max(max_p_up_dev, std::abs(*row.p_up - single_impurity_closed_form(*row.phi_ab)));
          max_p_upup_dev = std::max(max_p_upup_dev, std::abs(*row.p_upup - two_impurity_closed_form(row.phi_mod)));
          max_nonabelian_dev = std::max(max_nonabelian_dev,
                                        std::abs(*row.p_upup - nonabelian_probability({1.0, row.phi_mod})));
        }
        rows.push_back(row);
      }
    }
    if (e.kind == ExperimentKind::InterferometryCheck) {
      diag["max_p_up_closed_form_deviation"] = max_p_up_dev;
      diag["max_p_upup_closed_form_deviation"] = max_p_upup_dev;
      diag["max_p_upup_nonabelian_deviation"] = max_nonabelian_dev;
    }
    diag["min_step_overlap"] = min_overlap;
    diag["unreliable_points"] = unreliable;
    std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
      return std::tie(a.R, a.delta_phi) < std::tie(b.R, b.delta_phi);
    });
    result.rows.insert(result.rows.end(), rows.begin(), rows.end());
  }
  return result;
}

namespace {

std::string fmt(double v) {
  if (v == 0.0) v = 0.0;  // no negative zero
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string{}; }

}  // namespace

std::string results_csv(const RunResult& result) {
  std::ostringstream out;
  out << "experiment,kind,R,delta_phi,phi_unwrapped,phi_mod,min_mag,reliable,q_star,phi_ab,phi_exc,charge,p_up,"
         "p_upup\n";
  for (const ResultRow& r : result.rows) {
    const bool phase = r.kind != ExperimentKind::ChargeOperator;
    out << r.experiment << ',' << to_string(r.kind) << ',' << fmt(r.R) << ',' << fmt(r.delta_phi) << ','
        << (phase ? fmt(r.phi_unwrapped) : "") << ',' << (phase ? fmt(r.phi_mod) : "") << ','
        << (phase ? fmt(r.min_mag) : "") << ',' << (phase ? (r.reliable ? "1" : "0") : "") << ','
        << fmt(r.q_star) << ',' << fmt(r.phi_ab) << ',' << fmt(r.phi_exc) << ',' << fmt(r.charge) << ','
        << fmt(r.p_up) << ',' << fmt(r.p_upup) << '\n';
  }
  return out.str();
}

std::string densities_csv(const RunResult& result) {
  std::ostringstream out;
  out << "experiment,delta_phi,x,y,density,reference\n";
  for (const DensityRow& d : result.densities)
    out << d.experiment << ',' << fmt(d.delta_phi) << ',' << d.x << ',' << d.y << ',' << fmt(d.density) << ','
        << fmt(d.reference) << '\n';
  return out.str();
}

std::string summary_json(const RunConfig& config, const RunResult& result) {
  ojson root;
  ojson prov;
  prov["config_hash"] = config_hash(config);
  prov["tool"] = "chernbraid 0.1.0";
  ojson steps;
  for (const auto& e : config.experiments)
    if (e.kind != ExperimentKind::ChargeOperator) steps[e.id] = e.n_steps;
  prov["n_steps"] = steps;
  prov["tolerances"] = {{"degeneracy", kDegeneracyTolerance},
                        {"alignment_singular_value_floor", kAlignmentFloor},
                        {"reliable_max_phase", kPi / 2.0},
                        {"exchange_min_step_overlap", kMinStepOverlap}};
  root["provenance"] = prov;

  ojson list = ojson::array();
  for (const auto& e : config.experiments) {
    ojson j = experiment_to_json(e);
    if (!e.preset.empty()) j["preset"] = e.preset;
    ojson fits = ojson::array();
    for (const FitSummary& f : result.fits)
      if (f.experiment == e.id)
        fits.push_back({{"source", f.source},
                        {"R", f.R},
                        {"q_star", f.fit.q_star},
                        {"intercept", f.fit.intercept},
                        {"residual_rms", f.fit.residual_rms},
                        {"points", f.fit.points.size()}});
    j["fits"] = fits;
    ojson charges = ojson::array();
    for (const ChargeSample& c : result.charges)
      if (c.experiment == e.id)
        charges.push_back({{"delta_phi", c.delta_phi}, {"pin", {c.pin.x, c.pin.y}}, {"charge", c.charge}});
    if (!charges.empty()) j["charges"] = charges;
    ojson diag = ojson::object();
    if (auto it = result.diagnostics.find(e.id); it != result.diagnostics.end())
      for (const auto& [k, v] : it->second) diag[k] = v;
    j["diagnostics"] = diag;
    if (auto it = result.seconds.find(e.id); it != result.seconds.end()) j["seconds"] = it->second;
    list.push_back(j);
  }
  root["experiments"] = list;

  ojson fails = ojson::array();
  for (const StepFailure& f : result.failures) {
    ojson j{{"experiment", f.experiment}, {"R", f.R}, {"delta_phi", f.delta_phi}, {"message", f.message}};
    if (f.step) j["step"] = *f.step;
    fails.push_back(j);
  }
  root["failures"] = fails;
  return root.dump(2) + "\n";
}

}  // namespace chernbraid
