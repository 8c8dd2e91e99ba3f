#pragma once

// Run-level plumbing: a small INI-style configuration format, built-in
// presets, initial-state assembly, and the drivers that march a scenario
// in time and write its diagnostic outputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kflock/diagnostics.hpp"
#include "kflock/errors.hpp"
#include "kflock/grid.hpp"
#include "kflock/interaction.hpp"
#include "kflock/time_integration.hpp"
#include "kflock/transport.hpp"

namespace kflock {

/// CSV cell format: 17 significant digits reproduce the exact double.
inline std::string fmt_csv(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct BoxSpec {
  double x_lo = 0.0, x_hi = 0.0;
  double v_lo = 0.0, v_hi = 0.0;
  double amplitude = 0.0;
};

struct PointSpec {
  double x = 0.0, v = 0.0;
  double mass = 0.0;
};

struct InitialSpec {
  std::vector<BoxSpec> boxes;
  std::vector<PointSpec> points;
  // exp(-1/(r2 - x^2 - v^2)) inside the disc x^2 + v^2 < r2
  std::optional<double> bump_radius2;
  bool zero = false;
};

struct StudySpec {
  int level_lo = 1;
  int level_hi = 5;
  int reference = 6;   // level of the reference run; N = 2^(level+2) cells
  double dt_base = 0.04;  // halved at each level
  std::vector<double> times;
};

struct ScenarioConfig {
  std::string name = "custom";
  Normalization kind = Normalization::cucker_smale;
  std::string phi_text = "power_law 0.5";

  double x_min = -1.0, x_max = 1.0;
  int x_cells = 1;
  double v_min = -1.0, v_max = 1.0;
  int v_cells = 8;
  int degree = 2;

  InitialSpec initial;
  IntegratorConfig integrator;
  double limiter_epsilon = 1e-13;
  bool transport_enabled = true;
  TransportConfig transport;
  std::string out_dir = "out";
  std::optional<StudySpec> study;
};

// --------------------------------------------------------------------------
// enum <-> text

inline std::string to_text(Normalization k) {
  return k == Normalization::cucker_smale ? "cs" : "mt";
}

inline Normalization normalization_from_text(const std::string& s) {
  if (s == "cs") return Normalization::cucker_smale;
  if (s == "mt") return Normalization::motsch_tadmor;
  throw ConfigError("model kind: expected cs or mt, got '" + s + "'");
}

inline std::string to_text(TimeScheme s) {
  switch (s) {
    case TimeScheme::forward_euler: return "forward_euler";
    case TimeScheme::ssp_rk2: return "ssp_rk2";
    default: return "ssp_rk3";
  }
}

inline TimeScheme scheme_from_text(const std::string& s) {
  if (s == "forward_euler") return TimeScheme::forward_euler;
  if (s == "ssp_rk2") return TimeScheme::ssp_rk2;
  if (s == "ssp_rk3") return TimeScheme::ssp_rk3;
  throw ConfigError(
      "integrator scheme: expected forward_euler, ssp_rk2, or ssp_rk3, got '" +
      s + "'");
}

inline std::string to_text(CflMode m) {
  return m == CflMode::dynamic_bound ? "dynamic" : "static";
}

inline CflMode cfl_from_text(const std::string& s) {
  if (s == "dynamic") return CflMode::dynamic_bound;
  if (s == "static") return CflMode::static_bound;
  throw ConfigError("integrator cfl: expected dynamic or static, got '" + s +
                    "'");
}

inline std::string to_text(XReconstruction r) {
  return r == XReconstruction::upwind_first_order ? "upwind" : "minmod";
}

inline XReconstruction reconstruction_from_text(const std::string& s) {
  if (s == "upwind") return XReconstruction::upwind_first_order;
  if (s == "minmod") return XReconstruction::minmod_muscl;
  throw ConfigError("transport reconstruction: expected upwind or minmod, got '" +
                    s + "'");
}

inline std::string to_text(XBoundary b) {
  return b == XBoundary::outflow ? "outflow" : "periodic";
}

inline XBoundary boundary_from_text(const std::string& s) {
  if (s == "outflow") return XBoundary::outflow;
  if (s == "periodic") return XBoundary::periodic;
  throw ConfigError("transport boundary: expected outflow or periodic, got '" +
                    s + "'");
}

inline std::string to_text(Splitting s) {
  return s == Splitting::lie ? "lie" : "strang";
}

inline Splitting splitting_from_text(const std::string& s) {
  if (s == "lie") return Splitting::lie;
  if (s == "strang") return Splitting::strang;
  throw ConfigError("transport splitting: expected lie or strang, got '" + s +
                    "'");
}

// --------------------------------------------------------------------------
// low-level text parsing

namespace detail {

inline std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct RawEntry {
  std::string section, key, value;
  int line = 0;
  bool used = false;
};

struct RawConfig {
  std::vector<RawEntry> entries;

  std::optional<std::string> take(const std::string& sec,
                                  const std::string& key) {
    RawEntry* hit = nullptr;
    for (RawEntry& e : entries) {
      if (e.section != sec || e.key != key) continue;
      if (hit)
        throw ConfigError("duplicate key '" + key + "' in [" + sec +
                          "] (lines " + std::to_string(hit->line) + " and " +
                          std::to_string(e.line) + ")");
      hit = &e;
    }
    if (!hit) return std::nullopt;
    hit->used = true;
    return hit->value;
  }

  std::vector<std::string> take_all(const std::string& sec,
                                    const std::string& key) {
    std::vector<std::string> values;
    for (RawEntry& e : entries) {
      if (e.section == sec && e.key == key) {
        e.used = true;
        values.push_back(e.value);
      }
    }
    return values;
  }

  void reject_unused() const {
    for (const RawEntry& e : entries) {
      if (!e.used)
        throw ConfigError("unknown key '" + e.key + "' in [" + e.section +
                          "] (line " + std::to_string(e.line) + ")");
    }
  }
};

inline RawConfig parse_raw(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3)
        throw ConfigError("malformed section header at line " +
                          std::to_string(number));
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value' at line " +
                        std::to_string(number));
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("expected 'key = value' at line " +
                        std::to_string(number));
    if (section.empty())
      throw ConfigError("key outside any [section] at line " +
                        std::to_string(number));
    raw.entries.push_back({section, key, value, number, false});
  }
  return raw;
}

inline double parse_number(const std::string& text, const std::string& what) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ConfigError(what + ": cannot parse number from '" + text + "'");
  if (!std::isfinite(value)) throw ConfigError(what + ": value must be finite");
  return value;
}

inline int parse_integer(const std::string& text, const std::string& what) {
  const double v = parse_number(text, what);
  const int n = static_cast<int>(std::lround(v));
  if (v != static_cast<double>(n))
    throw ConfigError(what + ": expected an integer, got '" + text + "'");
  return n;
}

inline std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

inline bool parse_flag(const std::string& text, const std::string& what) {
  if (text == "true" || text == "on" || text == "1") return true;
  if (text == "false" || text == "off" || text == "0") return false;
  throw ConfigError(what + ": expected true or false, got '" + text + "'");
}

}  // namespace detail

// --------------------------------------------------------------------------
// derived objects and validation

inline InfluenceFunction parse_influence(const std::string& text) {
  const std::vector<std::string> tok = detail::split_ws(text);
  if (tok.empty()) throw ConfigError("model phi: empty specification");
  if (tok[0] == "power_law") {
    if (tok.size() > 2)
      throw ConfigError("model phi: too many arguments in '" + text + "'");
    const double p =
        tok.size() > 1 ? detail::parse_number(tok[1], "model phi power_law")
                       : 0.5;
    if (p < 0.0)
      throw ConfigError("model phi: power_law exponent must be >= 0");
    return influence_power_law(p);
  }
  if (tok[0] == "indicator") {
    if (tok.size() != 2)
      throw ConfigError("model phi: indicator needs a radius");
    const double r = detail::parse_number(tok[1], "model phi indicator");
    if (r <= 0.0)
      throw ConfigError("model phi: indicator radius must be positive");
    return influence_indicator(r);
  }
  if (tok[0] == "poly_cutoff" && tok.size() == 1) return influence_poly_cutoff();
  if (tok[0] == "one" && tok.size() == 1) return influence_constant();
  throw ConfigError("model phi: unknown influence '" + text + "'");
}

inline PhaseGrid make_grid(const ScenarioConfig& cfg) {
  try {
    return PhaseGrid{cfg.x_min, cfg.x_max, cfg.x_cells,
                     cfg.v_min, cfg.v_max, cfg.v_cells, cfg.degree};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

/// A fixed step must sit strictly under the linear stability ceiling
/// alpha1 * h / (v_max - v_min), the worst case of the dynamic bound.
inline void check_fixed_dt(double dt, const ScenarioConfig& cfg) {
  if (!(dt > 0.0)) throw ConfigError("integrator dt: must be positive");
  const double span = cfg.v_max - cfg.v_min;
  const double h = span / cfg.v_cells;
  const double bound = cfl_alpha1(cfg.degree) * h / span;
  if (!(dt < bound))
    throw ConfigError("integrator dt = " + shortest_repr(dt) +
                      " violates the stability bound dt < alpha1*h/(v_max - "
                      "v_min) = " +
                      shortest_repr(bound));
}

inline void validate_config(const ScenarioConfig& cfg) {
  make_grid(cfg);
  parse_influence(cfg.phi_text);

  const InitialSpec& ini = cfg.initial;
  const bool has_content = !ini.boxes.empty() || !ini.points.empty() ||
                           ini.bump_radius2.has_value();
  if (ini.zero && has_content)
    throw ConfigError("initial: zero = true excludes box, point, and bump");
  if (!ini.zero && !has_content)
    throw ConfigError("initial: provide box, point, bump, or zero = true");
  for (const BoxSpec& b : ini.boxes) {
    if (!(b.x_lo < b.x_hi) || !(b.v_lo < b.v_hi))
      throw ConfigError(
          "initial box: bounds must satisfy x_lo < x_hi and v_lo < v_hi");
    if (b.amplitude < 0.0)
      throw ConfigError("initial box: amplitude must be >= 0");
  }
  for (const PointSpec& p : ini.points) {
    if (p.mass < 0.0) throw ConfigError("initial point: mass must be >= 0");
    if (p.x < cfg.x_min || p.x > cfg.x_max || p.v < cfg.v_min || p.v > cfg.v_max)
      throw ConfigError("initial point: location outside the domain");
  }
  if (ini.bump_radius2 && !(*ini.bump_radius2 > 0.0))
    throw ConfigError("initial bump: squared radius must be positive");

  const IntegratorConfig& ti = cfg.integrator;
  if (!(ti.safety > 0.0) || ti.safety > 1.0)
    throw ConfigError("integrator safety: must lie in (0, 1]");
  if (ti.t_end < 0.0) throw ConfigError("integrator t_end: must be >= 0");
  if (!(ti.cadence > 0.0)) throw ConfigError("output cadence: must be positive");
  if (!(cfg.limiter_epsilon > 0.0) || cfg.limiter_epsilon > 1e-3)
    throw ConfigError("limiter epsilon: must lie in (0, 1e-3]");

  if (ti.dt) {
    if (cfg.study)
      throw ConfigError(
          "integrator dt: a convergence study derives its steps from dt_base");
    check_fixed_dt(*ti.dt, cfg);
  }

  if (cfg.study) {
    if (cfg.transport_enabled)
      throw ConfigError(
          "study: the convergence study integrates the alignment term only; "
          "set transport enabled = false");
    const StudySpec& st = *cfg.study;
    if (st.level_lo < 1 || st.level_hi < st.level_lo)
      throw ConfigError("study levels: need 1 <= lo <= hi");
    if (st.reference <= st.level_hi)
      throw ConfigError("study reference: must exceed the finest study level");
    if (!(st.dt_base > 0.0)) throw ConfigError("study dt_base: must be positive");
    // Levels share one Courant ratio: dt_s / h_s = 4 dt_base / (v_max - v_min).
    if (!(4.0 * st.dt_base < cfl_alpha1(cfg.degree)))
      throw ConfigError(
          "study dt_base = " + shortest_repr(st.dt_base) +
          " violates the per-level stability bound dt_base < alpha1/4 = " +
          shortest_repr(cfl_alpha1(cfg.degree) / 4.0));
    if (st.times.empty())
      throw ConfigError("study times: need at least one time");
    for (std::size_t i = 0; i < st.times.size(); ++i) {
      if (st.times[i] < 0.0)
        throw ConfigError("study times: must be >= 0");
      if (i > 0 && !(st.times[i - 1] < st.times[i]))
        throw ConfigError("study times: must be strictly increasing");
    }
  }
}

// --------------------------------------------------------------------------
// parsing and emission of whole configurations

inline ScenarioConfig parse_config(const std::string& text) {
  detail::RawConfig raw = detail::parse_raw(text);
  ScenarioConfig cfg;

  auto need = [&raw](const char* sec, const char* key) -> std::string {
    auto v = raw.take(sec, key);
    if (!v)
      throw ConfigError(std::string("missing required key '") + key + "' in [" +
                        sec + "]");
    return *v;
  };

  if (auto v = raw.take("model", "kind")) cfg.kind = normalization_from_text(*v);
  if (auto v = raw.take("model", "phi")) cfg.phi_text = *v;

  cfg.x_min = detail::parse_number(need("grid", "x_min"), "grid x_min");
  cfg.x_max = detail::parse_number(need("grid", "x_max"), "grid x_max");
  cfg.x_cells = detail::parse_integer(need("grid", "x_cells"), "grid x_cells");
  cfg.v_min = detail::parse_number(need("grid", "v_min"), "grid v_min");
  cfg.v_max = detail::parse_number(need("grid", "v_max"), "grid v_max");
  cfg.v_cells = detail::parse_integer(need("grid", "v_cells"), "grid v_cells");
  cfg.degree = detail::parse_integer(need("grid", "degree"), "grid degree");

  for (const std::string& s : raw.take_all("initial", "box")) {
    const auto tok = detail::split_ws(s);
    if (tok.size() != 5)
      throw ConfigError(
          "initial box: expected 'x_lo x_hi v_lo v_hi amplitude', got '" + s +
          "'");
    cfg.initial.boxes.push_back({detail::parse_number(tok[0], "initial box"),
                                 detail::parse_number(tok[1], "initial box"),
                                 detail::parse_number(tok[2], "initial box"),
                                 detail::parse_number(tok[3], "initial box"),
                                 detail::parse_number(tok[4], "initial box")});
  }
  for (const std::string& s : raw.take_all("initial", "point")) {
    const auto tok = detail::split_ws(s);
    if (tok.size() != 3)
      throw ConfigError("initial point: expected 'x v mass', got '" + s + "'");
    cfg.initial.points.push_back({detail::parse_number(tok[0], "initial point"),
                                  detail::parse_number(tok[1], "initial point"),
                                  detail::parse_number(tok[2], "initial point")});
  }
  if (auto v = raw.take("initial", "bump"))
    cfg.initial.bump_radius2 = detail::parse_number(*v, "initial bump");
  if (auto v = raw.take("initial", "zero"))
    cfg.initial.zero = detail::parse_flag(*v, "initial zero");

  cfg.integrator.scheme = default_scheme_for_degree(cfg.degree);
  if (auto v = raw.take("integrator", "scheme"))
    cfg.integrator.scheme = scheme_from_text(*v);
  if (auto v = raw.take("integrator", "dt"))
    cfg.integrator.dt = detail::parse_number(*v, "integrator dt");
  if (auto v = raw.take("integrator", "cfl"))
    cfg.integrator.cfl_mode = cfl_from_text(*v);
  if (auto v = raw.take("integrator", "safety"))
    cfg.integrator.safety = detail::parse_number(*v, "integrator safety");
  if (auto v = raw.take("integrator", "t_end"))
    cfg.integrator.t_end = detail::parse_number(*v, "integrator t_end");

  if (auto v = raw.take("limiter", "epsilon"))
    cfg.limiter_epsilon = detail::parse_number(*v, "limiter epsilon");

  if (auto v = raw.take("transport", "enabled"))
    cfg.transport_enabled = detail::parse_flag(*v, "transport enabled");
  if (auto v = raw.take("transport", "reconstruction"))
    cfg.transport.reconstruction = reconstruction_from_text(*v);
  if (auto v = raw.take("transport", "boundary"))
    cfg.transport.boundary = boundary_from_text(*v);
  if (auto v = raw.take("transport", "splitting"))
    cfg.transport.splitting = splitting_from_text(*v);

  cfg.integrator.cadence =
      cfg.integrator.t_end > 0.0 ? cfg.integrator.t_end : 1.0;
  if (auto v = raw.take("output", "cadence"))
    cfg.integrator.cadence = detail::parse_number(*v, "output cadence");
  if (auto v = raw.take("output", "dir")) cfg.out_dir = *v;
  if (auto v = raw.take("output", "name")) cfg.name = *v;

  bool has_study = false;
  StudySpec st;
  st.dt_base = cfg.degree >= 2 ? 0.04 : 0.1;
  st.times = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  if (auto v = raw.take("study", "levels")) {
    const auto tok = detail::split_ws(*v);
    if (tok.size() != 2)
      throw ConfigError("study levels: expected 'lo hi', got '" + *v + "'");
    st.level_lo = detail::parse_integer(tok[0], "study levels");
    st.level_hi = detail::parse_integer(tok[1], "study levels");
    has_study = true;
  }
  if (auto v = raw.take("study", "reference")) {
    st.reference = detail::parse_integer(*v, "study reference");
    has_study = true;
  }
  if (auto v = raw.take("study", "dt_base")) {
    st.dt_base = detail::parse_number(*v, "study dt_base");
    has_study = true;
  }
  if (auto v = raw.take("study", "times")) {
    st.times.clear();
    for (const std::string& t : detail::split_ws(*v))
      st.times.push_back(detail::parse_number(t, "study times"));
    has_study = true;
  }
  if (has_study) cfg.study = st;

  raw.reject_unused();
  validate_config(cfg);
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// Full round-trip serialization: parse_config(resolved_config_text(c))
/// reproduces c, with every default spelled out.
inline std::string resolved_config_text(const ScenarioConfig& cfg) {
  std::ostringstream out;
  out << "# resolved scenario configuration; every default is spelled out\n";
  out << "[model]\n"
      << "kind = " << to_text(cfg.kind) << "\n"
      << "phi = " << cfg.phi_text << "\n\n";
  out << "[grid]\n"
      << "x_min = " << shortest_repr(cfg.x_min) << "\n"
      << "x_max = " << shortest_repr(cfg.x_max) << "\n"
      << "x_cells = " << cfg.x_cells << "\n"
      << "v_min = " << shortest_repr(cfg.v_min) << "\n"
      << "v_max = " << shortest_repr(cfg.v_max) << "\n"
      << "v_cells = " << cfg.v_cells << "\n"
      << "degree = " << cfg.degree << "\n\n";
  out << "[initial]\n";
  for (const BoxSpec& b : cfg.initial.boxes)
    out << "box = " << shortest_repr(b.x_lo) << ' ' << shortest_repr(b.x_hi)
        << ' ' << shortest_repr(b.v_lo) << ' ' << shortest_repr(b.v_hi) << ' '
        << shortest_repr(b.amplitude) << "\n";
  for (const PointSpec& p : cfg.initial.points)
    out << "point = " << shortest_repr(p.x) << ' ' << shortest_repr(p.v) << ' '
        << shortest_repr(p.mass) << "\n";
  if (cfg.initial.bump_radius2)
    out << "bump = " << shortest_repr(*cfg.initial.bump_radius2) << "\n";
  if (cfg.initial.zero) out << "zero = true\n";
  out << "\n";
  out << "[integrator]\n"
      << "scheme = " << to_text(cfg.integrator.scheme) << "\n";
  if (cfg.integrator.dt)
    out << "dt = " << shortest_repr(*cfg.integrator.dt) << "\n";
  out << "cfl = " << to_text(cfg.integrator.cfl_mode) << "\n"
      << "safety = " << shortest_repr(cfg.integrator.safety) << "\n"
      << "t_end = " << shortest_repr(cfg.integrator.t_end) << "\n\n";
  out << "[limiter]\n"
      << "epsilon = " << shortest_repr(cfg.limiter_epsilon) << "\n\n";
  out << "[transport]\n"
      << "enabled = " << (cfg.transport_enabled ? "true" : "false") << "\n"
      << "reconstruction = " << to_text(cfg.transport.reconstruction) << "\n"
      << "boundary = " << to_text(cfg.transport.boundary) << "\n"
      << "splitting = " << to_text(cfg.transport.splitting) << "\n\n";
  out << "[output]\n"
      << "name = " << cfg.name << "\n"
      << "dir = " << cfg.out_dir << "\n"
      << "cadence = " << shortest_repr(cfg.integrator.cadence) << "\n";
  if (cfg.study) {
    const StudySpec& st = *cfg.study;
    out << "\n[study]\n"
        << "levels = " << st.level_lo << ' ' << st.level_hi << "\n"
        << "reference = " << st.reference << "\n"
        << "dt_base = " << shortest_repr(st.dt_base) << "\n"
        << "times =";
    for (double t : st.times) out << ' ' << shortest_repr(t);
    out << "\n";
  }
  return out.str();
}

// --------------------------------------------------------------------------
// presets

inline ScenarioConfig preset(const std::string& name) {
  ScenarioConfig cfg;
  cfg.name = name;
  cfg.out_dir = name + "-out";

  if (name == "convergence" || name == "convergence-k1") {
    // Smooth compactly supported bump, alignment subsystem only; the level
    // ladder refines the velocity grid while the spatial row count is fixed.
    cfg.kind = Normalization::cucker_smale;
    cfg.phi_text = "power_law 0.5";
    cfg.x_min = -1.0; cfg.x_max = 1.0; cfg.x_cells = 10;
    cfg.v_min = -1.0; cfg.v_max = 1.0; cfg.v_cells = 8;
    cfg.degree = name == "convergence-k1" ? 1 : 2;
    cfg.initial.bump_radius2 = 0.9;
    cfg.integrator.scheme = default_scheme_for_degree(cfg.degree);
    cfg.integrator.t_end = 3.0;
    cfg.integrator.cadence = 0.5;
    cfg.transport_enabled = false;
    StudySpec st;
    st.level_lo = 1;
    st.level_hi = 6;
    st.reference = 7;
    st.dt_base = cfg.degree >= 2 ? 0.04 : 0.1;
    st.times = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    cfg.study = st;
    return cfg;
  }

  if (name == "flocking-cs") {
    // Indicator block with x-support 2 and v-support 1; slowly decaying
    // influence keeps the interaction integral growing well past the initial
    // diameter, so a flock forms and the v-support contracts exponentially.
    cfg.kind = Normalization::cucker_smale;
    cfg.phi_text = "power_law 0.5";
    cfg.x_min = -2.5; cfg.x_max = 2.5; cfg.x_cells = 40;
    cfg.v_min = -0.5; cfg.v_max = 0.5; cfg.v_cells = 40;
    cfg.degree = 2;
    cfg.initial.boxes.push_back({-1.0, 1.0, -0.5, 0.5, 1.0});
    cfg.integrator.scheme = TimeScheme::ssp_rk3;
    cfg.integrator.dt = 0.004;
    cfg.integrator.t_end = 4.0;
    cfg.integrator.cadence = 1.0;
    return cfg;
  }

  if (name == "clusters-strong" || name == "clusters-weak") {
    // Two narrow counter-moving groups with closing speed 0.9. The
    // alignment impulse available over the whole encounter is 2 * radius:
    // radius 0.8 exceeds the closing speed and the groups merge into one
    // velocity cluster; radius 0.4 leaves them a residual relative speed
    // of 0.1 and they drift apart as two clusters.
    cfg.kind = Normalization::cucker_smale;
    cfg.phi_text = name == "clusters-strong" ? "indicator 0.8" : "indicator 0.4";
    cfg.x_min = -1.5; cfg.x_max = 1.5; cfg.x_cells = 120;
    cfg.v_min = -0.6; cfg.v_max = 0.6; cfg.v_cells = 96;
    cfg.degree = 2;
    cfg.initial.boxes.push_back({-0.5, -0.4, 0.4, 0.5, 1.0});
    cfg.initial.boxes.push_back({0.4, 0.5, -0.5, -0.4, 1.0});
    cfg.integrator.scheme = TimeScheme::ssp_rk3;
    cfg.integrator.dt = 0.0015;
    cfg.integrator.t_end = 6.0;
    cfg.integrator.cadence = 0.5;
    return cfg;
  }

  if (name == "cs-vs-mt" || name == "cs-vs-mt-cs") {
    // A light group (mass 0.02) far from a heavy point flock (mass 0.98)
    // that moves at speed 1 and never enters the influence radius. Global
    // normalization divides the light group's self-alignment by the total
    // mass and nearly freezes it; local normalization lets it contract at
    // rate ~1. The heavy flock leaves through the outflow boundary early,
    // which does not disturb the light group.
    cfg.kind = name == "cs-vs-mt" ? Normalization::motsch_tadmor
                                  : Normalization::cucker_smale;
    cfg.phi_text = "poly_cutoff";
    cfg.x_min = -1.0; cfg.x_max = 7.0; cfg.x_cells = 160;
    cfg.v_min = -0.25; cfg.v_max = 1.25; cfg.v_cells = 120;
    cfg.degree = 2;
    cfg.initial.boxes.push_back({-0.1, 0.1, -0.05, 0.05, 1.0});
    cfg.initial.points.push_back({5.0, 1.0, 0.98});
    cfg.integrator.scheme = TimeScheme::ssp_rk3;
    cfg.integrator.dt = 0.00125;
    cfg.integrator.t_end = 4.0;
    cfg.integrator.cadence = 0.5;
    return cfg;
  }

  throw ConfigError("unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
  return {"convergence",     "convergence-k1", "flocking-cs", "clusters-strong",
          "clusters-weak",   "cs-vs-mt",       "cs-vs-mt-cs"};
}

// --------------------------------------------------------------------------
// initial state

inline DGState build_initial_state(const ScenarioConfig& cfg,
                                   const PhaseGrid& grid) {
  const InitialSpec& ini = cfg.initial;
  DGState state;
  if (ini.zero) {
    state = DGState(grid);
  } else {
    state = project(grid, [&ini](double x, double v) {
      double value = 0.0;
      for (const BoxSpec& b : ini.boxes)
        if (b.x_lo < x && x < b.x_hi && b.v_lo < v && v < b.v_hi)
          value += b.amplitude;
      if (ini.bump_radius2) {
        const double r2 = x * x + v * v;
        if (r2 < *ini.bump_radius2)
          value += std::exp(-1.0 / (*ini.bump_radius2 - r2));
      }
      return value;
    });
    for (const PointSpec& p : ini.points) {
      const int i = std::clamp(
          static_cast<int>(std::floor((p.x - cfg.x_min) / grid.dx())), 0,
          grid.nx - 1);
      const int j = std::clamp(
          static_cast<int>(std::floor((p.v - cfg.v_min) / grid.h())), 0,
          grid.nv - 1);
      state.at(i, j, 0) += p.mass / (grid.dx() * grid.h());
    }
  }
  limit_in_place(state, grid, cfg.limiter_epsilon);
  return state;
}

// --------------------------------------------------------------------------
// marching

/// Advances to an absolute time, shortening the last step to land exactly.
inline void advance_to(DGState& state, double target, const PhaseGrid& grid,
                       const FlockingSystem& sys, const ScenarioConfig& cfg) {
  const double tiny = 1e-12 * std::max(1.0, std::abs(target));
  while (state.time < target - tiny) {
    double dt = cfg.integrator.dt
                    ? *cfg.integrator.dt
                    : sys.stable_dt(state, cfg.integrator.cfl_mode,
                                    cfg.integrator.safety);
    dt = std::min(dt, target - state.time);
    try {
      state = cfg.transport_enabled
                  ? split_step(state, grid, sys, cfg.integrator.scheme,
                               cfg.transport, dt)
                  : flocking_step(sys, state, dt, cfg.integrator.scheme);
    } catch (const StabilityError& e) {
      throw StabilityError(std::string(e.what()) +
                           " (during the step starting at t = " +
                           shortest_repr(state.time) + ")");
    }
  }
  state.time = target;
}

inline std::vector<double> output_times(double t_end, double cadence) {
  std::vector<double> times{0.0};
  const double tol = 1e-9 * std::max(1.0, t_end);
  for (int k = 1;; ++k) {
    const double t = k * cadence;
    if (t >= t_end - tol) break;
    times.push_back(t);
  }
  if (t_end > 0.0) times.push_back(t_end);
  return times;
}

// --------------------------------------------------------------------------
// output files

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace detail

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out = detail::open_output(path);
  out << text;
}

inline void write_diagnostics_csv(const std::filesystem::path& path,
                                  const std::vector<DiagnosticsRecord>& records) {
  std::ofstream out = detail::open_output(path);
  out << "t,mass,S,V,envelope,clusters\n";
  for (const DiagnosticsRecord& r : records)
    out << fmt_csv(r.time) << ',' << fmt_csv(r.mass) << ','
        << fmt_csv(r.x_width) << ',' << fmt_csv(r.v_width) << ','
        << fmt_csv(r.envelope) << ',' << r.clusters << '\n';
}

inline void write_marginal_csv(const std::filesystem::path& path,
                               const VelocityMarginal& marginal) {
  std::ofstream out = detail::open_output(path);
  out << "v,F0";
  for (int l = 1; l <= marginal.degree; ++l) out << ",F" << l;
  out << '\n';
  for (int j = 0; j < marginal.nv; ++j) {
    out << fmt_csv(marginal.v_center(j));
    for (int l = 0; l <= marginal.degree; ++l)
      out << ',' << fmt_csv(marginal.at(j, l));
    out << '\n';
  }
}

// --------------------------------------------------------------------------
// drivers

struct RunResult {
  ScenarioConfig config;
  std::filesystem::path out_dir;
  std::optional<FlockBound> bound;
  std::vector<DiagnosticsRecord> records;
  PhaseGrid grid;
  DGState final_state;
};

inline RunResult run_scenario(const ScenarioConfig& cfg_in,
                              const std::string& out_dir_override = "") {
  ScenarioConfig cfg = cfg_in;
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  validate_config(cfg);
  if (cfg.study)
    throw ConfigError("configuration '" + cfg.name +
                      "' defines a convergence study; run it with the rates "
                      "command");

  const PhaseGrid grid = make_grid(cfg);
  const InfluenceFunction phi = parse_influence(cfg.phi_text);
  DGState state = build_initial_state(cfg, grid);
  const double mass = total_mass(state, grid);
  const FlockingSystem sys(grid, InteractionModel{cfg.kind, phi, mass},
                           cfg.limiter_epsilon);

  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  write_text_file(dir / "resolved_config.txt", resolved_config_text(cfg));

  const SupportWidths initial_widths = support_widths(state, grid);
  const std::optional<FlockBound> bound =
      flock_diameter(phi, initial_widths.x_width, initial_widths.v_width);

  std::vector<DiagnosticsRecord> records;
  for (double t : output_times(cfg.integrator.t_end, cfg.integrator.cadence)) {
    advance_to(state, t, grid, sys, cfg);
    records.push_back(collect_diagnostics(state, grid, bound));
    write_marginal_csv(dir / ("marginal_t" + shortest_repr(state.time) + ".csv"),
                       records.back().marginal);
  }
  write_diagnostics_csv(dir / "diagnostics.csv", records);
  return RunResult{cfg, dir, bound, std::move(records), grid, std::move(state)};
}

struct RateTable {
  int degree = 1;
  int reference_level = 6;
  std::vector<int> levels;
  std::vector<double> times;
  std::vector<std::vector<double>> errors;  // errors[level_index][time_index]
  std::vector<std::vector<double>> rates;   // rates[pair_index][time_index]
};

inline RateTable run_convergence(const ScenarioConfig& cfg_in,
                                 const std::string& out_dir_override = "") {
  ScenarioConfig cfg = cfg_in;
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  validate_config(cfg);
  if (!cfg.study)
    throw ConfigError("configuration '" + cfg.name +
                      "' has no [study] section");
  const StudySpec st = *cfg.study;
  const int count = st.level_hi - st.level_lo + 1;
  if (count < 3)
    throw ConfigError("study needs at least 3 levels to report rates, got " +
                      std::to_string(count));

  const InfluenceFunction phi = parse_influence(cfg.phi_text);

  std::vector<int> all_levels;
  for (int s = st.level_lo; s <= st.level_hi; ++s) all_levels.push_back(s);
  all_levels.push_back(st.reference);

  std::vector<std::vector<VelocityMarginal>> snapshots(all_levels.size());
  for (std::size_t li = 0; li < all_levels.size(); ++li) {
    const int s = all_levels[li];
    ScenarioConfig level_cfg = cfg;
    level_cfg.study.reset();
    level_cfg.v_cells = 1 << (s + 2);
    level_cfg.integrator.dt = st.dt_base / static_cast<double>(1 << s);
    level_cfg.integrator.t_end = st.times.back();
    try {
      validate_config(level_cfg);
    } catch (const ConfigError& e) {
      throw ConfigError("study level " + std::to_string(s) + ": " + e.what());
    }
    const PhaseGrid grid = make_grid(level_cfg);
    DGState state = build_initial_state(level_cfg, grid);
    const FlockingSystem sys(
        grid, InteractionModel{cfg.kind, phi, total_mass(state, grid)},
        cfg.limiter_epsilon);
    for (double t : st.times) {
      advance_to(state, t, grid, sys, level_cfg);
      snapshots[li].push_back(velocity_marginal(state, grid));
    }
  }

  RateTable table;
  table.degree = cfg.degree;
  table.reference_level = st.reference;
  table.levels.assign(all_levels.begin(), all_levels.end() - 1);
  table.times = st.times;
  const std::vector<VelocityMarginal>& reference = snapshots.back();
  for (int li = 0; li < count; ++li) {
    std::vector<double> row;
    for (std::size_t ti = 0; ti < st.times.size(); ++ti)
      row.push_back(l1_error(snapshots[li][ti], reference[ti]));
    table.errors.push_back(std::move(row));
  }
  for (int p = 0; p + 1 < count; ++p) {
    std::vector<double> row;
    for (std::size_t ti = 0; ti < st.times.size(); ++ti)
      row.push_back(-std::log2(table.errors[p + 1][ti] / table.errors[p][ti]));
    table.rates.push_back(std::move(row));
  }

  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  write_text_file(dir / "resolved_config.txt", resolved_config_text(cfg));
  std::ofstream out = detail::open_output(dir / "rates.csv");
  out << "quantity,level";
  for (double t : st.times) out << ",t=" << shortest_repr(t);
  out << '\n';
  for (int li = 0; li < count; ++li) {
    out << "error," << table.levels[li];
    for (double e : table.errors[li]) out << ',' << fmt_csv(e);
    out << '\n';
  }
  for (int p = 0; p + 1 < count; ++p) {
    out << "rate," << table.levels[p + 1];
    for (double r : table.rates[p]) out << ',' << fmt_csv(r);
    out << '\n';
  }
  return table;
}

inline std::string format_rate_table(const RateTable& table) {
  std::ostringstream out;
  char buf[64];
  out << "L1 self-convergence of the velocity marginal (degree " << table.degree
      << ", reference N = " << (1 << (table.reference_level + 2)) << ")\n";
  out << "  N     ";
  for (double t : table.times) {
    std::snprintf(buf, sizeof buf, " %12s", ("t=" + shortest_repr(t)).c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t li = 0; li < table.levels.size(); ++li) {
    std::snprintf(buf, sizeof buf, "  %-6d", 1 << (table.levels[li] + 2));
    out << buf;
    for (double e : table.errors[li]) {
      std::snprintf(buf, sizeof buf, " %12.4e", e);
      out << buf;
    }
    out << '\n';
    if (li > 0) {
      out << "  rate  ";
      for (double r : table.rates[li - 1]) {
        std::snprintf(buf, sizeof buf, " %12.2f", r);
        out << buf;
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace kflock
