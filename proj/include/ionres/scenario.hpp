#pragma once

// Declarative scenarios. A JSON document names a target state, how the
// reservoir is realized, the physical rates (MHz in files, converted to
// units of the electronic decay rate Gamma inside), an environment and an
// integration grid; run_scenario designs the reservoir, finds the steady
// state and propagates the requested models.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ionres/errors.hpp"
#include "ionres/hilbert.hpp"
#include "ionres/liouvillian.hpp"
#include "ionres/pointer.hpp"
#include "ionres/vibronic.hpp"

namespace ionres {

using json = nlohmann::json;

enum class RunMode { protect, prepare };
enum class ModelChoice { full, reduced, both };

struct TargetSpec {
  enum class Kind { qubit, phase, cat, squeezed, amplitudes };
  Kind kind = Kind::qubit;
  std::vector<cplx> amplitudes;  // qubit (c0, c1) or explicit list, normalized
  double input_norm = 1.0;       // norm of the amplitudes as written in the file
  std::size_t order = 0;         // phase state N
  double phi = 0.0;
  cplx alpha = 0.0;
  double r = 0.0;
};

struct DriveSpec {
  enum class Kind { automatic, none, explicit_list };
  Kind kind = Kind::automatic;
  std::vector<LaserDrive> drives;  // explicit list, Rabi frequencies in MHz
};

struct PhysicalSpec {
  double gamma_mhz = 4.0;
  double nu_mhz = 25.0;  // trap frequency, recorded only
  double eta = 0.2;
  double omega1_mhz = 2.0;
  std::optional<double> gamma_eng_mhz;  // abstract reservoirs (cat) only
  std::optional<std::vector<double>> sideband_etas;
};

struct EnvironmentSpec {
  Environment::Kind kind = Environment::Kind::none;
  double gamma_mhz = 0.0;
  double n_thermal = 0.0;
  double lambda_mhz = 0.0;
};

struct GridSpec {
  enum class Unit { microseconds, engineered };
  Unit unit = Unit::engineered;
  double t_max = 10.0;  // in 1/Gamma_eng, or microseconds
  std::size_t points = 201;
};

struct RecoilSpec {
  enum class Kind { none, dipole, tabulated };
  Kind kind = Kind::dipole;
  std::vector<double> s, w;
  std::size_t nodes = 16;
};

struct Scenario {
  std::string name;
  RunMode mode = RunMode::protect;
  TargetSpec target;
  DriveSpec drives;
  PhysicalSpec physical;
  EnvironmentSpec environment;
  ModelChoice model = ModelChoice::both;
  GridSpec grid;
  std::size_t truncation = 20;
  RecoilSpec recoil;
  bool start_from_target = true;
  bool write_report = true;
  bool write_timeseries = true;
  std::vector<std::string> defaults;  // human-readable record of every default applied
};

inline const char* to_string(RunMode m) { return m == RunMode::protect ? "protect" : "prepare"; }
inline const char* to_string(ModelChoice m) {
  switch (m) {
    case ModelChoice::full: return "full";
    case ModelChoice::reduced: return "reduced";
    case ModelChoice::both: return "both";
  }
  return "?";
}
inline const char* to_string(TargetSpec::Kind k) {
  switch (k) {
    case TargetSpec::Kind::qubit: return "qubit";
    case TargetSpec::Kind::phase: return "phase";
    case TargetSpec::Kind::cat: return "cat";
    case TargetSpec::Kind::squeezed: return "squeezed";
    case TargetSpec::Kind::amplitudes: return "amplitudes";
  }
  return "?";
}

inline bool runs_full(ModelChoice m) { return m != ModelChoice::reduced; }
inline bool runs_reduced(ModelChoice m) { return m != ModelChoice::full; }

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

// Typed access to a JSON tree that reports the offending path.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }
  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }
  Node at(const char* key) const {
    if (!has(key)) fail("missing required key '" + std::string(key) + "'");
    return Node(j_.at(key), path_ + "/" + key);
  }
  Node at(std::size_t i) const { return Node(j_.at(i), path_ + "/" + std::to_string(i)); }

  void require_object(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) fail("unknown key '" + it.key() + "'");
    }
  }
  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("number is not finite");
    return v;
  }
  std::size_t count() const {
    if (!j_.is_number_integer() || j_.get<long long>() < 0) fail("expected a non-negative integer");
    return static_cast<std::size_t>(j_.get<long long>());
  }
  std::string text() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  // A complex number is written as a plain number or as [re, im].
  cplx complex() const {
    if (j_.is_number()) return number();
    if (j_.is_array() && j_.size() == 2) return {at(std::size_t{0}).number(), at(std::size_t{1}).number()};
    fail("expected a number or a [re, im] pair");
  }
  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).number());
    return out;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError((path_.empty() ? "/" : path_) + ": " + msg); }

 private:
  const json& j_;
  std::string path_;
};

inline std::string fmt_number(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

inline TargetSpec parse_target(const Node& n) {
  TargetSpec t;
  const std::string kind = n.at("kind").text();
  if (kind == "qubit") {
    n.require_object({"kind", "c0", "c1"});
    t.kind = TargetSpec::Kind::qubit;
    t.amplitudes = {n.at("c0").complex(), n.at("c1").complex()};
  } else if (kind == "phase") {
    n.require_object({"kind", "N", "phi"});
    t.kind = TargetSpec::Kind::phase;
    t.order = n.at("N").count();
    t.phi = n.has("phi") ? n.at("phi").number() : 0.0;
    if (t.order < 1) throw ValidationError("phase target needs N >= 1");
    for (std::size_t k = 0; k <= t.order; ++k) t.amplitudes.push_back(std::polar(1.0, static_cast<double>(k) * t.phi));
  } else if (kind == "cat") {
    n.require_object({"kind", "alpha"});
    t.kind = TargetSpec::Kind::cat;
    t.alpha = n.at("alpha").complex();
    if (!(std::abs(t.alpha) > 0.0)) throw ValidationError("cat target needs alpha != 0");
  } else if (kind == "squeezed") {
    n.require_object({"kind", "r"});
    t.kind = TargetSpec::Kind::squeezed;
    t.r = n.at("r").number();
    if (t.r < 0.0) throw ValidationError("squeezing factor r must be non-negative");
  } else if (kind == "amplitudes") {
    n.require_object({"kind", "c"});
    t.kind = TargetSpec::Kind::amplitudes;
    const Node c = n.at("c");
    for (std::size_t i = 0; i < c.size(); ++i) t.amplitudes.push_back(c.at(i).complex());
    if (t.amplitudes.size() < 2) throw ValidationError("amplitude target needs at least two amplitudes");
  } else {
    n.at("kind").fail("unknown target kind '" + kind + "'");
  }
  if (!t.amplitudes.empty()) {
    double norm2 = 0.0;
    for (auto c : t.amplitudes) norm2 += std::norm(c);
    if (!(norm2 > 0.0)) throw ValidationError("target amplitudes are all zero");
    t.input_norm = std::sqrt(norm2);
    for (auto& c : t.amplitudes) c /= t.input_norm;
  }
  return t;
}

inline LaserDrive parse_drive(const Node& n) {
  n.require_object({"kind", "order", "eta", "rabi_mhz", "label"});
  LaserDrive d;
  const std::string kind = n.at("kind").text();
  if (kind == "red") d.kind = Sideband::red;
  else if (kind == "blue") d.kind = Sideband::blue;
  else if (kind == "carrier") d.kind = Sideband::carrier;
  else n.at("kind").fail("drive kind must be red, blue or carrier");
  d.order = n.has("order") ? n.at("order").count() : (d.kind == Sideband::carrier ? 0 : 1);
  d.eta = n.at("eta").number();
  d.rabi = n.at("rabi_mhz").complex();
  d.label = n.has("label") ? n.at("label").text() : n.path();
  try {
    d.validate();
  } catch (const Error& e) {
    throw ValidationError(n.path() + ": " + e.what());
  }
  return d;
}

inline double mean_quanta(const TargetSpec& t) {
  switch (t.kind) {
    case TargetSpec::Kind::cat: return std::norm(t.alpha);
    case TargetSpec::Kind::squeezed: return std::sinh(t.r) * std::sinh(t.r);
    default: {
      double m = 0.0;
      for (std::size_t k = 0; k < t.amplitudes.size(); ++k) m += static_cast<double>(k) * std::norm(t.amplitudes[k]);
      return m;
    }
  }
}

}  // namespace detail

/// The target as a normalized ket in `space`. Throws TruncationError when
/// the space discards more than the truncation tolerance.
inline Ket target_state(const TargetSpec& t, FockSpace space) {
  switch (t.kind) {
    case TargetSpec::Kind::cat: return cat_plus_state(space, t.alpha);
    case TargetSpec::Kind::squeezed: return squeezed_vacuum(space, t.r);
    default:
      if (t.amplitudes.size() > space.dim()) throw TruncationError("target amplitudes do not fit in the Fock space");
      return amplitude_state(space, t.amplitudes);
  }
}

/// Checks the scenario invariants that depend on several fields at once.
inline void validate_scenario(const Scenario& s) {
  const auto& p = s.physical;
  if (!(p.gamma_mhz > 0.0)) throw ValidationError("Gamma_mhz must be positive");
  if (!(p.omega1_mhz > 0.0)) throw ValidationError("Omega1_mhz must be positive");
  if (!(p.nu_mhz > 0.0)) throw ValidationError("nu_mhz must be positive");
  if (!(p.eta > 0.0 && p.eta < 1.0)) throw ValidationError("eta must lie in (0, 1)");
  if (p.gamma_eng_mhz && !(*p.gamma_eng_mhz > 0.0)) throw ValidationError("gamma_eng_mhz must be positive");
  const auto& e = s.environment;
  if (e.gamma_mhz < 0.0) throw ValidationError("environment gamma_mhz must be non-negative (negative rate)");
  if (e.n_thermal < 0.0) throw ValidationError("environment n_thermal must be non-negative");
  if (e.lambda_mhz < 0.0) throw ValidationError("environment lambda_mhz must be non-negative (negative rate)");
  if (!(s.grid.t_max > 0.0)) throw ValidationError("grid t_max must be positive");
  if (s.grid.points < 2) throw ValidationError("grid needs at least two points");
  if (s.truncation < 2) throw ValidationError("truncation must be at least 2");

  if (runs_full(s.model)) {
    if (s.drives.kind == DriveSpec::Kind::none)
      throw ValidationError("model '" + std::string(to_string(s.model)) + "' needs laser drives; this scenario has none");
    if (s.drives.kind == DriveSpec::Kind::automatic && s.target.kind == TargetSpec::Kind::cat)
      throw ValidationError("no laser configuration realizing the cat-state reservoir is known (open problem); "
                            "use model 'reduced' or give explicit drives");
  }
  if (s.drives.kind == DriveSpec::Kind::none && s.grid.unit == GridSpec::Unit::engineered)
    throw ValidationError("without an engineered reservoir the grid must be given as t_max_us");
  if (p.sideband_etas) {
    if (s.drives.kind != DriveSpec::Kind::automatic ||
        (s.target.kind != TargetSpec::Kind::phase && s.target.kind != TargetSpec::Kind::amplitudes))
      throw ValidationError("sideband_etas only applies to automatic design of phase or amplitude targets");
    if (p.sideband_etas->size() + 1 != s.target.amplitudes.size())
      throw ValidationError("sideband_etas needs exactly N entries");
  }
  if (s.recoil.kind == RecoilSpec::Kind::tabulated && s.recoil.s.size() != s.recoil.w.size())
    throw ValidationError("tabulated recoil pattern needs matching s and w lists");
}

namespace detail {

// Smallest admissible dimension: the sizing rule, raised until the target's
// discarded mass meets the truncation tolerance.
inline std::size_t resolve_truncation(Scenario& s) {
  const std::size_t rule = default_truncation(mean_quanta(s.target));
  for (std::size_t d = rule; d <= kSuperoperatorDimGuard; ++d) {
    try {
      target_state(s.target, FockSpace(d));
    } catch (const TruncationError&) {
      continue;
    }
    if (d == rule)
      s.defaults.push_back("truncation: D=" + std::to_string(d) + " from max(20, ceil(8<n>+10))");
    else
      s.defaults.push_back("truncation: D=" + std::to_string(d) + " (sizing rule gave " + std::to_string(rule) +
                           "; raised until the discarded target mass is below " + fmt_number(kTruncationTolerance) +
                           ")");
    return d;
  }
  throw TruncationError("no dimension up to " + std::to_string(kSuperoperatorDimGuard) + " holds the target");
}

}  // namespace detail

/// Parses and validates a scenario document, applying and recording
/// defaults for every omitted field.
inline Scenario parse_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  const detail::Node root(doc, "");
  root.require_object({"name", "mode", "target", "drives", "physical", "environment", "model", "grid",
                       "truncation", "recoil", "initial", "outputs"});
  Scenario s;
  s.name = root.at("name").text();
  if (s.name.empty() || s.name.find_first_of("/\\") != std::string::npos || s.name == "." || s.name == "..")
    root.at("name").fail("name must be a non-empty plain file name");

  if (root.has("mode")) {
    const auto m = root.at("mode").text();
    if (m == "protect") s.mode = RunMode::protect;
    else if (m == "prepare") s.mode = RunMode::prepare;
    else root.at("mode").fail("mode must be protect or prepare");
  } else {
    s.defaults.push_back("mode: protect");
  }

  s.target = detail::parse_target(root.at("target"));
  if (s.target.kind == TargetSpec::Kind::qubit && std::abs(s.target.input_norm - 1.0) > 1e-12)
    s.defaults.push_back("target: amplitudes renormalized (input norm " + detail::fmt_number(s.target.input_norm) + ")");

  if (root.has("drives")) {
    const auto d = root.at("drives");
    if (d.raw().is_string()) {
      const auto v = d.text();
      if (v == "auto") s.drives.kind = DriveSpec::Kind::automatic;
      else if (v == "none") s.drives.kind = DriveSpec::Kind::none;
      else d.fail("drives must be \"auto\", \"none\" or a list");
    } else {
      s.drives.kind = DriveSpec::Kind::explicit_list;
      for (std::size_t i = 0; i < d.size(); ++i) s.drives.drives.push_back(detail::parse_drive(d.at(i)));
      if (s.drives.drives.empty()) d.fail("explicit drive list is empty");
    }
  } else {
    s.drives.kind = DriveSpec::Kind::automatic;
    s.defaults.push_back("drives: auto");
  }

  if (root.has("physical")) {
    const auto p = root.at("physical");
    p.require_object({"Gamma_mhz", "nu_mhz", "eta", "Omega1_mhz", "gamma_eng_mhz", "sideband_etas"});
    auto take = [&](const char* key, double& field, const char* label) {
      if (p.has(key)) field = p.at(key).number();
      else s.defaults.push_back(std::string("physical.") + label + ": " + detail::fmt_number(field));
    };
    take("Gamma_mhz", s.physical.gamma_mhz, "Gamma_mhz");
    take("nu_mhz", s.physical.nu_mhz, "nu_mhz");
    take("eta", s.physical.eta, "eta");
    take("Omega1_mhz", s.physical.omega1_mhz, "Omega1_mhz");
    if (p.has("gamma_eng_mhz")) s.physical.gamma_eng_mhz = p.at("gamma_eng_mhz").number();
    if (p.has("sideband_etas")) s.physical.sideband_etas = p.at("sideband_etas").numbers();
  } else {
    s.defaults.push_back("physical: Gamma_mhz 4, nu_mhz 25, eta 0.2, Omega1_mhz 2");
  }

  if (root.has("environment")) {
    const auto e = root.at("environment");
    const auto kind = e.at("kind").text();
    if (kind == "none") {
      e.require_object({"kind"});
    } else if (kind == "thermal") {
      e.require_object({"kind", "gamma_mhz", "n_thermal"});
      s.environment.kind = Environment::Kind::thermal;
      s.environment.gamma_mhz = e.at("gamma_mhz").number();
      s.environment.n_thermal = e.at("n_thermal").number();
    } else if (kind == "random_field") {
      e.require_object({"kind", "lambda_mhz"});
      s.environment.kind = Environment::Kind::random_field;
      s.environment.lambda_mhz = e.at("lambda_mhz").number();
    } else {
      e.at("kind").fail("environment kind must be none, thermal or random_field");
    }
  } else {
    s.defaults.push_back("environment: none");
  }

  if (root.has("model")) {
    const auto m = root.at("model").text();
    if (m == "full") s.model = ModelChoice::full;
    else if (m == "reduced") s.model = ModelChoice::reduced;
    else if (m == "both") s.model = ModelChoice::both;
    else root.at("model").fail("model must be full, reduced or both");
  } else if (s.drives.kind == DriveSpec::Kind::none ||
             (s.target.kind == TargetSpec::Kind::cat && s.drives.kind == DriveSpec::Kind::automatic)) {
    s.model = ModelChoice::reduced;
    s.defaults.push_back("model: reduced (no laser realization available)");
  } else {
    s.model = ModelChoice::both;
    s.defaults.push_back("model: both");
  }

  if (root.has("grid")) {
    const auto g = root.at("grid");
    g.require_object({"t_max_us", "t_max_eng", "points"});
    if (g.has("t_max_us") && g.has("t_max_eng")) g.fail("give either t_max_us or t_max_eng, not both");
    if (g.has("t_max_us")) {
      s.grid.unit = GridSpec::Unit::microseconds;
      s.grid.t_max = g.at("t_max_us").number();
    } else if (g.has("t_max_eng")) {
      s.grid.t_max = g.at("t_max_eng").number();
    } else {
      s.defaults.push_back("grid.t_max_eng: 10");
    }
    if (g.has("points")) s.grid.points = g.at("points").count();
    else s.defaults.push_back("grid.points: 201");
  } else {
    s.defaults.push_back("grid: t_max_eng 10, points 201");
  }

  if (root.has("recoil")) {
    const auto r = root.at("recoil");
    if (r.raw().is_string()) {
      const auto v = r.text();
      if (v == "dipole") s.recoil.kind = RecoilSpec::Kind::dipole;
      else if (v == "none") s.recoil.kind = RecoilSpec::Kind::none;
      else r.fail("recoil must be \"dipole\", \"none\" or an object");
    } else {
      r.require_object({"kind", "s", "w", "nodes"});
      const auto kind = r.at("kind").text();
      if (kind == "dipole") s.recoil.kind = RecoilSpec::Kind::dipole;
      else if (kind == "none") s.recoil.kind = RecoilSpec::Kind::none;
      else if (kind == "tabulated") {
        s.recoil.kind = RecoilSpec::Kind::tabulated;
        s.recoil.s = r.at("s").numbers();
        s.recoil.w = r.at("w").numbers();
      } else r.at("kind").fail("recoil kind must be dipole, tabulated or none");
      if (r.has("nodes")) s.recoil.nodes = r.at("nodes").count();
    }
  } else {
    s.defaults.push_back("recoil: dipole, 16 nodes");
  }

  if (root.has("initial")) {
    const auto v = root.at("initial").text();
    if (v == "target") s.start_from_target = true;
    else if (v == "vacuum") s.start_from_target = false;
    else root.at("initial").fail("initial must be target or vacuum");
  } else {
    s.start_from_target = s.mode == RunMode::protect;
    s.defaults.push_back(std::string("initial: ") + (s.start_from_target ? "target" : "vacuum") +
                         ", electronic ground state");
  }

  if (root.has("outputs")) {
    const auto o = root.at("outputs");
    s.write_report = s.write_timeseries = false;
    for (std::size_t i = 0; i < o.size(); ++i) {
      const auto v = o.at(i).text();
      if (v == "report") s.write_report = true;
      else if (v == "timeseries") s.write_timeseries = true;
      else o.at(i).fail("outputs entries must be report or timeseries");
    }
  } else {
    s.defaults.push_back("outputs: report, timeseries");
  }

  validate_scenario(s);
  if (root.has("truncation")) {
    s.truncation = root.at("truncation").count();
    if (s.truncation < 2) root.at("truncation").fail("truncation must be at least 2");
    target_state(s.target, FockSpace(s.truncation));
  } else {
    s.truncation = detail::resolve_truncation(s);
  }
  return s;
}

/// Replaces the truncation dimension; the target must still fit.
inline void override_truncation(Scenario& s, std::size_t dim) {
  if (dim < 2) throw ValidationError("truncation override must be at least 2");
  target_state(s.target, FockSpace(dim));
  s.truncation = dim;
  s.defaults.push_back("truncation: D=" + std::to_string(dim) + " from command-line override");
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return parse_scenario(buf.str());
}

inline json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

/// Canonical form of a scenario with every default filled in.
inline json to_json(const Scenario& s) {
  json t{{"kind", to_string(s.target.kind)}};
  switch (s.target.kind) {
    case TargetSpec::Kind::qubit:
      t["c0"] = complex_json(s.target.amplitudes[0]);
      t["c1"] = complex_json(s.target.amplitudes[1]);
      t["input_norm"] = s.target.input_norm;
      break;
    case TargetSpec::Kind::phase:
      t["N"] = s.target.order;
      t["phi"] = s.target.phi;
      break;
    case TargetSpec::Kind::cat: t["alpha"] = complex_json(s.target.alpha); break;
    case TargetSpec::Kind::squeezed: t["r"] = s.target.r; break;
    case TargetSpec::Kind::amplitudes: {
      json c = json::array();
      for (auto z : s.target.amplitudes) c.push_back(complex_json(z));
      t["c"] = c;
      t["input_norm"] = s.target.input_norm;
      break;
    }
  }
  json drives;
  if (s.drives.kind == DriveSpec::Kind::automatic) drives = "auto";
  else if (s.drives.kind == DriveSpec::Kind::none) drives = "none";
  else {
    drives = json::array();
    for (const auto& d : s.drives.drives)
      drives.push_back({{"kind", to_string(d.kind)}, {"order", d.order}, {"eta", d.eta},
                        {"rabi_mhz", complex_json(d.rabi)}, {"label", d.label}});
  }
  json phys{{"Gamma_mhz", s.physical.gamma_mhz}, {"nu_mhz", s.physical.nu_mhz}, {"eta", s.physical.eta},
            {"Omega1_mhz", s.physical.omega1_mhz}};
  if (s.physical.gamma_eng_mhz) phys["gamma_eng_mhz"] = *s.physical.gamma_eng_mhz;
  if (s.physical.sideband_etas) phys["sideband_etas"] = *s.physical.sideband_etas;
  json env{{"kind", to_string(s.environment.kind)}};
  if (s.environment.kind == Environment::Kind::thermal) {
    env["gamma_mhz"] = s.environment.gamma_mhz;
    env["n_thermal"] = s.environment.n_thermal;
  } else if (s.environment.kind == Environment::Kind::random_field) {
    env["lambda_mhz"] = s.environment.lambda_mhz;
  }
  json grid{{"points", s.grid.points}};
  grid[s.grid.unit == GridSpec::Unit::microseconds ? "t_max_us" : "t_max_eng"] = s.grid.t_max;
  json recoil;
  switch (s.recoil.kind) {
    case RecoilSpec::Kind::none: recoil = {{"kind", "none"}}; break;
    case RecoilSpec::Kind::dipole: recoil = {{"kind", "dipole"}, {"nodes", s.recoil.nodes}}; break;
    case RecoilSpec::Kind::tabulated:
      recoil = {{"kind", "tabulated"}, {"s", s.recoil.s}, {"w", s.recoil.w}, {"nodes", s.recoil.nodes}};
      break;
  }
  json outputs = json::array();
  if (s.write_report) outputs.push_back("report");
  if (s.write_timeseries) outputs.push_back("timeseries");
  return {{"name", s.name},
          {"mode", to_string(s.mode)},
          {"target", t},
          {"drives", drives},
          {"physical", phys},
          {"environment", env},
          {"model", to_string(s.model)},
          {"grid", grid},
          {"truncation", s.truncation},
          {"recoil", recoil},
          {"initial", s.start_from_target ? "target" : "vacuum"},
          {"outputs", outputs}};
}

// ---------------------------------------------------------------------------
// Pipeline

/// Reservoir for a scenario, everything in units of Gamma.
struct Design {
  FockSpace space;
  Ket target;
  std::optional<EngineeredDissipator> dissipator;  // empty for environment-only runs
  std::optional<Operator> realized;                 // sum of drive operators / g, when drives exist
  DarkStateCheck realized_check;
};

namespace detail {

// Runs one pipeline stage, prefixing any library error with the stage name.
template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what());
  }
}

inline std::vector<LaserDrive> drives_in_gamma_units(const std::vector<LaserDrive>& drives, double gamma_mhz) {
  auto out = drives;
  for (auto& d : out) d.rabi /= gamma_mhz;
  return out;
}

}  // namespace detail

inline Design design_reservoir(const Scenario& s) {
  return detail::stage("design", [&] {
    const FockSpace space(s.truncation);
    const double G = s.physical.gamma_mhz;
    const double eta = s.physical.eta;
    const double omega1 = s.physical.omega1_mhz / G;
    Design out{space, target_state(s.target, space), std::nullopt, std::nullopt, {}};

    switch (s.drives.kind) {
      case DriveSpec::Kind::none: break;
      case DriveSpec::Kind::explicit_list: {
        auto drives = detail::drives_in_gamma_units(s.drives.drives, G);
        auto [g, d] = realize(drives, space);
        const auto check = verify_dark_state(d, out.target);
        out.dissipator = EngineeredDissipator{d, 4.0 * g * g, drives, out.target, g, 1.0, check, std::nullopt};
        break;
      }
      case DriveSpec::Kind::automatic:
        switch (s.target.kind) {
          case TargetSpec::Kind::qubit:
            out.dissipator = qubit_drive(space, s.target.amplitudes[0], s.target.amplitudes[1], eta, omega1, 1.0);
            break;
          case TargetSpec::Kind::phase:
          case TargetSpec::Kind::amplitudes:
            out.dissipator = finite_superposition_drive(space, s.target.amplitudes, eta, omega1, 1.0,
                                                        s.physical.sideband_etas);
            break;
          case TargetSpec::Kind::squeezed:
            out.dissipator = squeeze_dissipator(space, s.target.r, omega1, eta, 1.0);
            break;
          case TargetSpec::Kind::cat: {
            const double rate = s.physical.gamma_eng_mhz ? *s.physical.gamma_eng_mhz / G : eta * eta * omega1 * omega1;
            out.dissipator = cat_dissipator(space, s.target.alpha, rate);
            break;
          }
        }
        break;
    }
    if (out.dissipator && !out.dissipator->drives.empty()) {
      out.realized = realize(out.dissipator->drives, space).d;
      out.realized_check = verify_dark_state(*out.realized, out.target);
    }
    return out;
  });
}

inline std::optional<RecoilKernel> recoil_kernel(const Scenario& s) {
  switch (s.recoil.kind) {
    case RecoilSpec::Kind::none: return std::nullopt;
    case RecoilSpec::Kind::dipole: return RecoilKernel::dipole(s.physical.eta, s.recoil.nodes);
    case RecoilSpec::Kind::tabulated: return RecoilKernel::tabulated(s.physical.eta, s.recoil.s, s.recoil.w, s.recoil.nodes);
  }
  return std::nullopt;
}

inline Environment environment_in_gamma_units(const Scenario& s) {
  const double G = s.physical.gamma_mhz;
  switch (s.environment.kind) {
    case Environment::Kind::thermal: return Environment::thermal(s.environment.gamma_mhz / G, s.environment.n_thermal);
    case Environment::Kind::random_field: return Environment::random_field(s.environment.lambda_mhz / G);
    case Environment::Kind::none: return Environment::none();
  }
  return Environment::none();
}

inline ReducedModel reduced_model(const Scenario& s, const Design& d) {
  if (d.dissipator) return ReducedModel(d.dissipator->d, d.dissipator->gamma_eng, recoil_kernel(s), environment_in_gamma_units(s));
  return ReducedModel(Operator::zero(d.space.dim()), 0.0, std::nullopt, environment_in_gamma_units(s));
}

inline VibronicModel full_model(const Scenario& s, const Design& d) {
  if (!d.dissipator || d.dissipator->drives.empty())
    throw ValidationError("the full vibronic model needs laser drives");
  return VibronicModel(interaction_hamiltonian(d.dissipator->drives, d.space), 1.0, recoil_kernel(s),
                       environment_in_gamma_units(s));
}

/// Integration grid in units of 1/Gamma.
inline std::vector<double> time_grid(const Scenario& s, const Design& d) {
  double t_max = s.grid.t_max * s.physical.gamma_mhz;
  if (s.grid.unit == GridSpec::Unit::engineered) {
    if (!d.dissipator) throw ValidationError("t_max_eng needs an engineered reservoir");
    t_max = s.grid.t_max / d.dissipator->gamma_eng;
  }
  return uniform_grid(t_max, s.grid.points);
}

struct SteadySummary {
  std::size_t multiplicity = 0;
  bool degenerate = false;
  double fidelity = 0.0;  // best fidelity with the target over the reported steady states
  double gap = 0.0;       // in units of Gamma
  Matrix state;
};

/// Stationary states of the reduced motional model (engineered reservoir,
/// recoil and environment) and its spectral gap.
inline SteadySummary analyze_steady_state(const Scenario& s, const Design& d) {
  return detail::stage("steady state", [&] {
    const ReducedModel model = reduced_model(s, d);
    const Eigen::MatrixXd r = hermitian_superoperator_of([&model](const Matrix& x) { return model.rhs(x); }, d.space.dim());
    const auto ss = steady_states_from(r, d.space.dim());
    SteadySummary out;
    out.multiplicity = ss.multiplicity;
    out.degenerate = ss.degenerate;
    const Matrix ref = d.target.projector();
    for (const auto& st : ss.states) {
      const double f = fidelity(ref, st.matrix());
      if (out.state.size() == 0 || f > out.fidelity) {
        out.fidelity = f;
        out.state = st.matrix();
      }
    }
    out.gap = spectral_gap_from(r);
    return out;
  });
}

/// One row per grid point; times in microseconds.
struct TimeSeries {
  std::string model;
  std::vector<double> t_us;
  std::vector<double> fidelity;
  std::vector<double> excited;  // Tr rho22; leading adiabatic estimate for the reduced model
  std::vector<double> trace_drift;
  std::vector<double> min_eigenvalue;
};

struct RunResult {
  json report;
  std::vector<TimeSeries> series;
};

inline constexpr const char* kTimeSeriesHeader = "t_us,F,tr_rho22,trace_drift,min_eigenvalue";

namespace detail {

inline void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 12);
  out.append(buf, res.ptr);
}

inline json drive_table(const EngineeredDissipator& e, double gamma_mhz, double omega1_mhz) {
  json rows = json::array();
  for (const auto& d : e.drives) {
    const cplx mhz = d.rabi * gamma_mhz;
    rows.push_back({{"label", d.label},
                    {"kind", to_string(d.kind)},
                    {"order", d.order},
                    {"eta", d.eta},
                    {"rabi_mhz", complex_json(mhz)},
                    {"abs_mhz", std::abs(mhz)},
                    {"phase_rad", std::arg(mhz)},
                    {"ratio_to_omega1", complex_json(mhz / omega1_mhz)}});
  }
  return rows;
}

inline void require_finite(const json& j, const std::string& path) {
  if (j.is_number_float() && !std::isfinite(j.get<double>()))
    throw IntegratorFailure("report field " + path + " is not finite");
  if (j.is_object())
    for (auto it = j.begin(); it != j.end(); ++it) require_finite(*it, path + "/" + it.key());
  if (j.is_array())
    for (std::size_t i = 0; i < j.size(); ++i) require_finite(j[i], path + "/" + std::to_string(i));
}

}  // namespace detail

/// Summary of the designed reservoir for reports and the `design` command.
inline json design_summary(const Scenario& s, const Design& d) {
  const double G = s.physical.gamma_mhz;
  json out{{"truncation", d.space.dim()}, {"target_discarded_mass", d.target.discarded_mass()}};
  if (!d.dissipator) {
    out["kind"] = "none";
    return out;
  }
  const auto& e = *d.dissipator;
  out["kind"] = s.drives.kind == DriveSpec::Kind::explicit_list ? "explicit" : "auto";
  out["gamma_eng_mhz"] = e.gamma_eng * G;
  out["gamma_eng_khz"] = e.gamma_eng * G * 1e3;
  out["dark_residual"] = e.check.residual;
  out["null_dim"] = e.check.null_dim;
  out["d_norm"] = e.d.norm();
  if (e.condition_number) out["condition_number"] = *e.condition_number;
  if (!e.drives.empty()) {
    out["g_over_Gamma"] = e.coupling;
    out["drives"] = detail::drive_table(e, G, s.physical.omega1_mhz);
    out["realized_residual"] = d.realized_check.residual;
  } else {
    out["drives"] = json::array();
  }
  return out;
}

inline json steady_summary_json(const Scenario& s, const SteadySummary& ss) {
  return {{"model", "reduced"},
          {"multiplicity", ss.multiplicity},
          {"degenerate", ss.degenerate},
          {"fidelity", ss.fidelity},
          {"spectral_gap_mhz", ss.gap * s.physical.gamma_mhz}};
}

using Logger = std::function<void(const std::string&)>;

/// Full pipeline: design, steady state, propagation of the requested
/// models, cross-model comparison and audit.
inline RunResult run_scenario(const Scenario& s, const Logger& log = {}) {
  auto note = [&](const std::string& m) {
    if (log) log(s.name + ": " + m);
  };
  validate_scenario(s);
  RunResult out;
  const double G = s.physical.gamma_mhz;

  note("designing reservoir (D=" + std::to_string(s.truncation) + ")");
  const Design d = design_reservoir(s);
  note("steady state");
  const SteadySummary ss = analyze_steady_state(s, d);

  const auto grid = detail::stage("grid", [&] { return time_grid(s, d); });
  const Matrix target = d.target.projector();
  const Matrix rho0 = s.start_from_target ? target : fock_state(d.space, 0).projector();
  // Reference for F(t): the initial state when protecting, the target when preparing.
  const Matrix& reference = s.start_from_target ? rho0 : target;

  json models = json::object();
  double drift = 0.0;
  double floor = std::numeric_limits<double>::infinity();
  std::vector<Matrix> reduced_states, full_states;

  auto summarize = [&](TimeSeries& ts, const Trajectory& traj, const std::vector<Matrix>& motional) {
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      ts.t_us.push_back(traj.times[k] / G);
      ts.fidelity.push_back(fidelity(reference, motional[k]));
      ts.trace_drift.push_back(traj.trace_drift[k]);
      ts.min_eigenvalue.push_back(traj.min_eigenvalue[k]);
    }
    drift = std::max(drift, traj.max_trace_drift());
    floor = std::min(floor, traj.min_eigenvalue_floor());
    return json{{"timeseries", s.write_timeseries ? "timeseries_" + ts.model + ".csv" : ""},
                {"final_fidelity", ts.fidelity.back()},
                {"final_target_fidelity", fidelity(target, motional.back())},
                {"max_trace_drift", traj.max_trace_drift()},
                {"min_eigenvalue", traj.min_eigenvalue_floor()},
                {"max_excited_population", *std::max_element(ts.excited.begin(), ts.excited.end())},
                {"integrator",
                 {{"accepted", traj.stats.accepted},
                  {"rejected", traj.stats.rejected},
                  {"rhs_evaluations", traj.stats.rhs_evaluations}}}};
  };

  if (runs_reduced(s.model)) {
    note("propagating reduced model over " + std::to_string(grid.size()) + " points");
    const auto model = reduced_model(s, d);
    const auto traj = detail::stage("reduced propagation", [&] { return propagate_reduced(model, rho0, grid); });
    TimeSeries ts;
    ts.model = "reduced";
    // Adiabatic estimate Tr rho22 = (4 g^2 / Gamma^2) Tr[d rho d^+] = gamma_eng Tr[d rho d^+].
    for (const auto& rho : traj.states) {
      double pe = 0.0;
      if (d.dissipator) {
        const Matrix& dm = d.dissipator->d.matrix();
        pe = d.dissipator->gamma_eng * (dm * rho * dm.adjoint()).trace().real();
      }
      ts.excited.push_back(pe);
    }
    models["reduced"] = summarize(ts, traj, traj.states);
    reduced_states = traj.states;
    out.series.push_back(std::move(ts));
  }
  if (runs_full(s.model)) {
    note("propagating full vibronic model over " + std::to_string(grid.size()) + " points");
    const auto model = detail::stage("full model", [&] { return full_model(s, d); });
    const auto traj = detail::stage("full propagation",
                                    [&] { return propagate_vibronic(model, VibronicState::ground(rho0), grid); });
    TimeSeries ts;
    ts.model = "full";
    ts.excited = traj.excited_population;
    models["full"] = summarize(ts, traj.full, traj.motional);
    full_states = traj.motional;
    out.series.push_back(std::move(ts));
  }

  json report{{"scenario", to_json(s)},
              {"defaults_applied", s.defaults},
              {"units", {{"rate", "MHz"}, {"time", "us"}}},
              {"design", design_summary(s, d)},
              {"steady_state", steady_summary_json(s, ss)},
              {"models", models},
              {"audit", {{"max_trace_drift", drift}, {"min_eigenvalue", floor}}}};
  if (!reduced_states.empty() && !full_states.empty()) {
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) worst = std::max(worst, trace_distance(full_states[k], reduced_states[k]));
    report["cross_model"] = {{"max_trace_distance", worst},
                             {"g_over_Gamma", d.dissipator->coupling},
                             {"note", "adiabatic elimination error is expected to scale with g/Gamma"}};
  }
  detail::require_finite(report, "");
  out.report = std::move(report);
  return out;
}

/// Writes one time series as CSV with a fixed number of significant digits.
inline void emit_timeseries(const TimeSeries& ts, const std::filesystem::path& path) {
  if (ts.t_us.empty()) throw DomainError("empty trajectory");
  std::string text = kTimeSeriesHeader;
  text += '\n';
  for (std::size_t k = 0; k < ts.t_us.size(); ++k) {
    detail::append_number(text, ts.t_us[k]);
    for (double v : {ts.fidelity[k], ts.excited[k], ts.trace_drift[k], ts.min_eigenvalue[k]}) {
      text += ',';
      detail::append_number(text, v);
    }
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

inline void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

/// Writes report.json and the CSV series into out_dir/<scenario name>.
inline std::filesystem::path write_artifacts(const Scenario& s, const RunResult& r, const std::filesystem::path& out_dir) {
  const auto dir = out_dir / s.name;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  if (s.write_timeseries)
    for (const auto& ts : r.series) emit_timeseries(ts, dir / ("timeseries_" + ts.model + ".csv"));
  if (s.write_report) write_json(r.report, dir / "report.json");
  return dir;
}

}  // namespace ionres
