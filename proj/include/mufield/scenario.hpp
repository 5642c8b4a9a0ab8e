#pragma once

// Scenario files in, artifacts out: a small TOML-subset reader, typed
// scenario construction with field-addressed validation, the standard
// check battery over a solved field, and deterministic writers for the
// batch tool. Every artifact embeds the tool version and scenario hash.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mufield/boundary.hpp"
#include "mufield/closed_form.hpp"
#include "mufield/diagnostics.hpp"
#include "mufield/forces.hpp"
#include "mufield/grid_solver.hpp"
#include "mufield/medium.hpp"
#include "mufield/radial.hpp"
#include "mufield/sources.hpp"

#ifndef MUFIELD_VERSION
#define MUFIELD_VERSION "0.0.0"
#endif

namespace mufield {

inline const char* tool_version() { return MUFIELD_VERSION; }

class ScenarioError : public ValidationError {
 public:
  explicit ScenarioError(const std::string& msg) : ValidationError(msg) {}
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// TOML subset: [table] and [[array-of-tables]] headers, key = value lines,
// values limited to strings, finite numbers, booleans, and one-line flat
// arrays of those. Comments with #. Keys are bare (letters, digits, _, -),
// optionally dotted. Everything is stored under a flat dotted path, with
// array-of-tables entries indexed numerically ("bodies.0.charge").

struct TomlValue {
  enum class Kind { String, Number, Boolean, Array };
  Kind kind = Kind::Number;
  std::string str;
  double num = 0.0;
  bool integral = false;
  bool flag = false;
  std::vector<TomlValue> items;
  int line = 0;
};

struct TomlDoc {
  std::map<std::string, TomlValue> values;
  std::vector<std::string> order;          // first-seen key order
  std::map<std::string, int> array_sizes;  // array-of-tables name -> count

  bool has(const std::string& path) const { return values.count(path) != 0; }
  const TomlValue* find(const std::string& path) const {
    auto it = values.find(path);
    return it == values.end() ? nullptr : &it->second;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool bare_key(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

[[noreturn]] inline void toml_fail(int line, const std::string& msg) {
  std::ostringstream os;
  os << "line " << line << ": " << msg;
  throw ScenarioError(os.str());
}

inline std::string strip_comment(const std::string& raw, int line) {
  std::string out;
  bool in_str = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (in_str) {
      out += c;
      if (c == '\\' && i + 1 < raw.size()) {
        out += raw[++i];
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '#') break;
    if (c == '"') in_str = true;
    out += c;
  }
  if (in_str) toml_fail(line, "unterminated string");
  return out;
}

inline TomlValue parse_scalar(const std::string& tok, int line) {
  TomlValue v;
  v.line = line;
  if (!tok.empty() && tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"') toml_fail(line, "unterminated string");
    v.kind = TomlValue::Kind::String;
    for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
      char c = tok[i];
      if (c != '\\') {
        v.str += c;
        continue;
      }
      if (i + 1 >= tok.size() - 1) toml_fail(line, "dangling escape");
      char e = tok[++i];
      switch (e) {
        case '"': v.str += '"'; break;
        case '\\': v.str += '\\'; break;
        case 'n': v.str += '\n'; break;
        case 't': v.str += '\t'; break;
        case 'r': v.str += '\r'; break;
        default: toml_fail(line, std::string("unsupported escape '\\") + e + "'");
      }
    }
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.kind = TomlValue::Kind::Boolean;
    v.flag = tok == "true";
    return v;
  }
  // decimal numbers only: strtod alone would also admit hex, inf, and nan
  if (tok.find_first_not_of("0123456789+-.eE") != std::string::npos)
    toml_fail(line, "cannot parse value '" + tok + "'");
  const char* s = tok.c_str();
  char* end = nullptr;
  double num = std::strtod(s, &end);
  if (end == s || *end != '\0' || !std::isfinite(num))
    toml_fail(line, "cannot parse value '" + tok + "'");
  v.kind = TomlValue::Kind::Number;
  v.num = num;
  v.integral = tok.find_first_of(".eE") == std::string::npos;
  return v;
}

// split a bracket-free run on top-level commas, respecting strings
inline std::vector<std::string> split_elements(const std::string& body, int line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_str = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (in_str) {
      cur += c;
      if (c == '\\' && i + 1 < body.size())
        cur += body[++i];
      else if (c == '"')
        in_str = false;
      continue;
    }
    if (c == '"') {
      in_str = true;
      cur += c;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c == '[' || c == ']') {
      toml_fail(line, "nested arrays are not supported");
    } else {
      cur += c;
    }
  }
  std::string last = trim(cur);
  if (!last.empty()) out.push_back(last);
  return out;
}

inline TomlValue parse_value(const std::string& tok, int line) {
  if (!tok.empty() && tok.front() == '[') {
    if (tok.back() != ']') toml_fail(line, "unterminated array");
    TomlValue v;
    v.kind = TomlValue::Kind::Array;
    v.line = line;
    for (const std::string& el : split_elements(tok.substr(1, tok.size() - 2), line))
      v.items.push_back(parse_scalar(el, line));
    return v;
  }
  return parse_scalar(tok, line);
}

}  // namespace detail

inline TomlDoc parse_toml(const std::string& text) {
  TomlDoc doc;
  std::string prefix;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = detail::trim(detail::strip_comment(raw, line));
    if (s.empty()) continue;

    if (s.front() == '[') {
      bool array = s.size() > 1 && s[1] == '[';
      std::string close = array ? "]]" : "]";
      std::size_t end = s.find(close);
      if (end == std::string::npos || !detail::trim(s.substr(end + close.size())).empty())
        detail::toml_fail(line, "malformed table header");
      std::string name = detail::trim(s.substr(array ? 2 : 1, end - (array ? 2 : 1)));
      if (array) {
        if (!detail::bare_key(name)) detail::toml_fail(line, "bad table-array name '" + name + "'");
        int idx = doc.array_sizes[name]++;
        prefix = name + "." + std::to_string(idx);
      } else {
        std::stringstream parts(name);
        std::string seg;
        while (std::getline(parts, seg, '.'))
          if (!detail::bare_key(detail::trim(seg)))
            detail::toml_fail(line, "bad table name '" + name + "'");
        prefix = name;
      }
      continue;
    }

    std::size_t eq = s.find('=');
    if (eq == std::string::npos) detail::toml_fail(line, "expected 'key = value'");
    std::string key = detail::trim(s.substr(0, eq));
    std::string val = detail::trim(s.substr(eq + 1));
    if (val.empty()) detail::toml_fail(line, "missing value for '" + key + "'");
    {
      std::stringstream parts(key);
      std::string seg;
      while (std::getline(parts, seg, '.'))
        if (!detail::bare_key(seg)) detail::toml_fail(line, "bad key '" + key + "'");
    }
    std::string path = prefix.empty() ? key : prefix + "." + key;
    if (doc.has(path))
      detail::toml_fail(line, "duplicate key '" + path + "' (first set on line " +
                                  std::to_string(doc.values[path].line) + ")");
    doc.values[path] = detail::parse_value(val, line);
    doc.order.push_back(path);
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Typed scenario construction.

struct ScenarioOutputs {
  bool solve = false;
  bool forces = false;
  bool diagnostics = false;
  std::vector<int> force_bodies;    // empty: all bodies
  std::vector<std::string> checks;  // empty: full battery
};

struct SweepSpec {
  std::string axis;
  std::vector<double> values;
};

struct ScenarioDoc {
  std::string path;
  std::string text;
  TomlDoc doc;
  std::uint64_t hash = 0;
};

inline ScenarioDoc read_scenario_text(std::string text, std::string path = "scenario") {
  ScenarioDoc sd;
  sd.path = std::move(path);
  sd.text = std::move(text);
  sd.hash = fnv1a64(sd.text);
  sd.doc = parse_toml(sd.text);
  return sd;
}

inline ScenarioDoc read_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot read scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_scenario_text(buf.str(), path);
}

namespace detail {

[[noreturn]] inline void field_fail(const TomlDoc& doc, const std::string& path,
                                    const std::string& msg) {
  std::ostringstream os;
  os << "'" << path << "'";
  if (const TomlValue* v = doc.find(path)) os << " (line " << v->line << ")";
  os << ": " << msg;
  throw ScenarioError(os.str());
}

inline const TomlValue& require_field(const TomlDoc& doc, const std::string& path) {
  const TomlValue* v = doc.find(path);
  if (!v) throw ScenarioError("missing required field '" + path + "'");
  return *v;
}

inline double field_num(const TomlDoc& doc, const std::string& path) {
  const TomlValue& v = require_field(doc, path);
  if (v.kind != TomlValue::Kind::Number) field_fail(doc, path, "expected a number");
  return v.num;
}

inline double field_num(const TomlDoc& doc, const std::string& path, double fallback) {
  return doc.has(path) ? field_num(doc, path) : fallback;
}

inline long long field_int(const TomlDoc& doc, const std::string& path) {
  const TomlValue& v = require_field(doc, path);
  if (v.kind != TomlValue::Kind::Number || !v.integral)
    field_fail(doc, path, "expected an integer");
  return static_cast<long long>(v.num);
}

inline long long field_int(const TomlDoc& doc, const std::string& path, long long fallback) {
  return doc.has(path) ? field_int(doc, path) : fallback;
}

inline std::string field_str(const TomlDoc& doc, const std::string& path) {
  const TomlValue& v = require_field(doc, path);
  if (v.kind != TomlValue::Kind::String) field_fail(doc, path, "expected a string");
  return v.str;
}

inline std::string field_str(const TomlDoc& doc, const std::string& path,
                             const std::string& fallback) {
  return doc.has(path) ? field_str(doc, path) : fallback;
}

inline bool field_bool(const TomlDoc& doc, const std::string& path, bool fallback) {
  if (!doc.has(path)) return fallback;
  const TomlValue& v = *doc.find(path);
  if (v.kind != TomlValue::Kind::Boolean) field_fail(doc, path, "expected true or false");
  return v.flag;
}

inline std::vector<double> field_vec(const TomlDoc& doc, const std::string& path, int expect) {
  const TomlValue& v = require_field(doc, path);
  if (v.kind != TomlValue::Kind::Array)
    field_fail(doc, path, "expected an array of " + std::to_string(expect) + " numbers");
  if (expect >= 0 && static_cast<int>(v.items.size()) != expect)
    field_fail(doc, path, "expected " + std::to_string(expect) + " entries, got " +
                              std::to_string(v.items.size()));
  std::vector<double> out;
  for (const TomlValue& el : v.items) {
    if (el.kind != TomlValue::Kind::Number) field_fail(doc, path, "expected numeric entries");
    out.push_back(el.num);
  }
  return out;
}

inline bool key_allowed(const std::string& path) {
  auto seg = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream parts(s);
    std::string p;
    while (std::getline(parts, p, '.')) out.push_back(p);
    return out;
  };
  auto one_of = [](const std::string& s, std::initializer_list<const char*> set) {
    for (const char* c : set)
      if (s == c) return true;
    return false;
  };
  std::vector<std::string> p = seg(path);
  if (p.size() == 1) return one_of(p[0], {"title", "seed"});
  if (p.size() == 2 && p[0] == "law")
    return one_of(p[1], {"name", "beta", "gamma", "a0", "G", "D"});
  if (p.size() == 2 && p[0] == "grid") return one_of(p[1], {"extent", "n", "lo", "hi"});
  if (p.size() == 2 && p[0] == "boundary") return one_of(p[1], {"kind", "gradient"});
  if (p.size() == 2 && p[0] == "solver")
    return one_of(p[1], {"tol", "max_iter", "max_cg", "multilevel"});
  if (p.size() == 2 && p[0] == "outputs")
    return one_of(p[1], {"solve", "forces", "diagnostics", "force_bodies", "checks"});
  if (p.size() == 2 && p[0] == "checks")
    return one_of(p[1], {"tolerance", "decay_slope_margin", "charge_bound_slack"});
  if (p.size() == 2 && p[0] == "sweep")
    return one_of(p[1], {"axis", "values", "from", "to", "count", "log"});
  if (p.size() == 3 && p[0] == "bodies" && !p[1].empty() &&
      p[1].find_first_not_of("0123456789") == std::string::npos)
    return one_of(p[2], {"kind", "position", "charge", "width", "radius", "profile", "phi",
                         "flux", "law", "beta", "gamma", "a0", "id"});
  return false;
}

}  // namespace detail

template <int D>
struct Scenario {
  std::string title;
  long long seed = 0;
  MediumLaw law;
  ChargeConfiguration<D> cfg;
  BoundaryCondition<D> bc;
  Grid<D> grid;
  SolveOptions opts;
  bool multilevel = true;
  ScenarioOutputs outputs;
  SweepSpec sweep;
  double check_tolerance = 0.02;
  double decay_slope_margin = 0.25;
  double charge_bound_slack = 1e-9;
  std::uint64_t hash = 0;
};

inline const std::vector<std::string>& known_check_names() {
  static const std::vector<std::string> names = {"energy-balance", "virial-scalar",
                                                 "virial-vector",  "decay",
                                                 "charge-bound",   "outward-gradient"};
  return names;
}

/// Dimension declared by the scenario (law.D, default 3); used to dispatch
/// the typed build.
inline int scenario_dimension(const ScenarioDoc& sd) {
  return static_cast<int>(detail::field_int(sd.doc, "law.D", 3));
}

template <int D>
Scenario<D> build_scenario(const ScenarioDoc& sd) {
  static_assert(D == 2 || D == 3, "grid scenarios are two- or three-dimensional");
  const TomlDoc& doc = sd.doc;

  for (const std::string& path : doc.order)
    if (!detail::key_allowed(path)) detail::field_fail(doc, path, "unknown field");

  Scenario<D> sc;
  sc.hash = sd.hash;
  sc.title = detail::field_str(doc, "title", "");
  sc.seed = detail::field_int(doc, "seed", 0);

  // law
  if (scenario_dimension(sd) != D)
    throw ScenarioError("'law.D': scenario is " + std::to_string(scenario_dimension(sd)) +
                        "-dimensional, expected " + std::to_string(D));
  {
    LawParams p;
    p.beta = detail::field_num(doc, "law.beta", p.beta);
    p.gamma = detail::field_num(doc, "law.gamma", p.gamma);
    p.a0 = detail::field_num(doc, "law.a0", p.a0);
    if (doc.has("law.G")) p.G = detail::field_num(doc, "law.G");
    p.D = D;
    try {
      sc.law = builtin_law(detail::field_str(doc, "law.name"), p);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(std::string("law: ") + e.what());
    }
  }

  // grid
  {
    Vec<D> lo{}, hi{};
    std::array<int, D> n{};
    if (doc.has("grid.extent")) {
      double ext = detail::field_num(doc, "grid.extent");
      if (ext <= 0.0) detail::field_fail(doc, "grid.extent", "must be > 0");
      long long nn = detail::field_int(doc, "grid.n");
      for (int a = 0; a < D; ++a) {
        lo[a] = -ext;
        hi[a] = ext;
        n[a] = static_cast<int>(nn);
      }
    } else {
      std::vector<double> vlo = detail::field_vec(doc, "grid.lo", D);
      std::vector<double> vhi = detail::field_vec(doc, "grid.hi", D);
      const TomlValue& vn = detail::require_field(doc, "grid.n");
      if (vn.kind != TomlValue::Kind::Array || static_cast<int>(vn.items.size()) != D)
        detail::field_fail(doc, "grid.n", "expected an array of " + std::to_string(D) +
                                              " integers (or use grid.extent with scalar n)");
      for (int a = 0; a < D; ++a) {
        lo[a] = vlo[a];
        hi[a] = vhi[a];
        if (vn.items[a].kind != TomlValue::Kind::Number || !vn.items[a].integral)
          detail::field_fail(doc, "grid.n", "expected integer entries");
        n[a] = static_cast<int>(vn.items[a].num);
      }
    }
    try {
      sc.grid = Grid<D>::make(lo, hi, n);
    } catch (const std::exception& e) {
      throw ScenarioError(std::string("grid: ") + e.what());
    }
  }

  // boundary
  {
    std::string kind = detail::field_str(doc, "boundary.kind", "decay");
    if (kind == "decay") {
      sc.bc = BoundaryCondition<D>::decay();
    } else if (kind == "uniform-gradient") {
      std::vector<double> g = detail::field_vec(doc, "boundary.gradient", D);
      Vec<D> g0{};
      for (int a = 0; a < D; ++a) g0[a] = g[a];
      sc.bc = BoundaryCondition<D>::uniform_gradient(g0);
    } else {
      detail::field_fail(doc, "boundary.kind",
                         "unknown boundary '" + kind + "' (decay | uniform-gradient)");
    }
  }

  // bodies
  {
    auto it = doc.array_sizes.find("bodies");
    int count = it == doc.array_sizes.end() ? 0 : it->second;
    for (int i = 0; i < count; ++i) {
      std::string at = "bodies." + std::to_string(i) + ".";
      Body<D> b;
      b.id = detail::field_str(doc, at + "id", "bodies[" + std::to_string(i) + "]");
      std::vector<double> pos = detail::field_vec(doc, at + "position", D);
      for (int a = 0; a < D; ++a) b.position[a] = pos[a];

      std::string kind = detail::field_str(doc, at + "kind", "point");
      if (kind == "point") {
        b.kind = BodyKind::Point;
        b.q = detail::field_num(doc, at + "charge");
        b.lambda = detail::field_num(doc, at + "width");
      } else if (kind == "sphere") {
        b.kind = BodyKind::Sphere;
        b.radius = detail::field_num(doc, at + "radius");
        double Q = detail::field_num(doc, at + "charge");
        double R = b.radius;
        std::string profile = detail::field_str(doc, at + "profile", "bump");
        if (R <= 0.0) detail::field_fail(doc, at + "radius", "must be > 0");
        if (profile == "bump") {
          double rho0 = Q / (bump_ball_integral(D) * std::pow(R, D));
          b.profile = [rho0, R](double r) {
            double u = 1.0 - (r / R) * (r / R);
            return rho0 * u * u * u;
          };
        } else if (profile == "uniform") {
          double rho0 = Q * D / (solid_angle(D) * std::pow(R, D));
          b.profile = [rho0](double) { return rho0; };
        } else {
          detail::field_fail(doc, at + "profile",
                             "unknown profile '" + profile + "' (bump | uniform)");
        }
      } else if (kind == "dirichlet") {
        b.kind = BodyKind::BoundaryDirichlet;
        b.radius = detail::field_num(doc, at + "radius");
        b.surface_value = detail::field_num(doc, at + "phi");
      } else if (kind == "neumann") {
        b.kind = BodyKind::BoundaryNeumann;
        b.radius = detail::field_num(doc, at + "radius");
        b.surface_value = detail::field_num(doc, at + "flux");
      } else if (kind == "inclusion") {
        b.kind = BodyKind::MediumInclusion;
        b.radius = detail::field_num(doc, at + "radius");
        LawParams p;
        p.beta = detail::field_num(doc, at + "beta", p.beta);
        p.gamma = detail::field_num(doc, at + "gamma", p.gamma);
        p.a0 = detail::field_num(doc, at + "a0", sc.law.a0);
        p.G = sc.law.G;
        p.D = D;
        try {
          b.inclusion_law = builtin_law(detail::field_str(doc, at + "law"), p);
        } catch (const std::invalid_argument& e) {
          throw ScenarioError(at + "law: " + e.what());
        }
      } else {
        detail::field_fail(doc, at + "kind",
                           "unknown body kind '" + kind +
                               "' (point | sphere | dirichlet | neumann | inclusion)");
      }
      sc.cfg.bodies.push_back(std::move(b));
    }
    try {
      sc.cfg.validate();
    } catch (const ValidationError& e) {
      throw ScenarioError(e.what());
    }
  }

  // solver
  sc.opts.tol = detail::field_num(doc, "solver.tol", sc.opts.tol);
  sc.opts.max_iter = static_cast<int>(detail::field_int(doc, "solver.max_iter", sc.opts.max_iter));
  sc.opts.max_cg = static_cast<int>(detail::field_int(doc, "solver.max_cg", sc.opts.max_cg));
  sc.multilevel = detail::field_bool(doc, "solver.multilevel", true);

  // outputs
  sc.outputs.solve = detail::field_bool(doc, "outputs.solve", false);
  sc.outputs.forces = detail::field_bool(doc, "outputs.forces", false);
  sc.outputs.diagnostics = detail::field_bool(doc, "outputs.diagnostics", false);
  if (doc.has("outputs.force_bodies")) {
    const TomlValue& v = *doc.find("outputs.force_bodies");
    if (v.kind != TomlValue::Kind::Array)
      detail::field_fail(doc, "outputs.force_bodies", "expected an array of body indices");
    for (const TomlValue& el : v.items) {
      if (el.kind != TomlValue::Kind::Number || !el.integral)
        detail::field_fail(doc, "outputs.force_bodies", "expected integer body indices");
      int idx = static_cast<int>(el.num);
      if (idx < 0 || idx >= static_cast<int>(sc.cfg.bodies.size()))
        detail::field_fail(doc, "outputs.force_bodies",
                           "body index " + std::to_string(idx) + " out of range");
      sc.outputs.force_bodies.push_back(idx);
    }
  }
  if (doc.has("outputs.checks")) {
    const TomlValue& v = *doc.find("outputs.checks");
    if (v.kind != TomlValue::Kind::Array)
      detail::field_fail(doc, "outputs.checks", "expected an array of check names");
    for (const TomlValue& el : v.items) {
      if (el.kind != TomlValue::Kind::String)
        detail::field_fail(doc, "outputs.checks", "expected check names as strings");
      const auto& known = known_check_names();
      if (std::find(known.begin(), known.end(), el.str) == known.end()) {
        std::string all;
        for (const std::string& n : known) all += (all.empty() ? "" : " | ") + n;
        detail::field_fail(doc, "outputs.checks", "unknown check '" + el.str + "' (" + all + ")");
      }
      sc.outputs.checks.push_back(el.str);
    }
  }

  sc.check_tolerance = detail::field_num(doc, "checks.tolerance", sc.check_tolerance);
  sc.decay_slope_margin =
      detail::field_num(doc, "checks.decay_slope_margin", sc.decay_slope_margin);
  sc.charge_bound_slack =
      detail::field_num(doc, "checks.charge_bound_slack", sc.charge_bound_slack);

  // sweep
  if (doc.has("sweep.axis") || doc.has("sweep.values") || doc.has("sweep.from")) {
    sc.sweep.axis = detail::field_str(doc, "sweep.axis");
    if (doc.has("sweep.values")) {
      sc.sweep.values = detail::field_vec(doc, "sweep.values", -1);
      if (sc.sweep.values.empty()) detail::field_fail(doc, "sweep.values", "must be nonempty");
    } else {
      double from = detail::field_num(doc, "sweep.from");
      double to = detail::field_num(doc, "sweep.to");
      long long count = detail::field_int(doc, "sweep.count");
      bool log = detail::field_bool(doc, "sweep.log", false);
      if (count < 2) detail::field_fail(doc, "sweep.count", "need at least 2 points");
      if (log && (from <= 0.0 || to <= 0.0))
        detail::field_fail(doc, "sweep.from", "log spacing needs positive endpoints");
      for (long long i = 0; i < count; ++i) {
        double t = static_cast<double>(i) / static_cast<double>(count - 1);
        sc.sweep.values.push_back(log ? from * std::pow(to / from, t)
                                      : from + (to - from) * t);
      }
    }
  }

  return sc;
}

/// Copy of the scenario with the dotted `axis` replaced by `v`. The axis must
/// address a number: either a scalar field or an element of a numeric array
/// ("bodies.1.position.0"). The derived hash folds the override in.
inline ScenarioDoc with_axis_value(const ScenarioDoc& sd, const std::string& axis, double v) {
  ScenarioDoc out = sd;
  TomlValue* target = nullptr;
  auto it = out.doc.values.find(axis);
  if (it != out.doc.values.end()) {
    if (it->second.kind != TomlValue::Kind::Number)
      throw ScenarioError("sweep axis '" + axis + "' is not a numeric scenario field");
    target = &it->second;
  } else {
    std::size_t dot = axis.rfind('.');
    std::string head = dot == std::string::npos ? "" : axis.substr(0, dot);
    std::string tail = dot == std::string::npos ? axis : axis.substr(dot + 1);
    auto pit = out.doc.values.find(head);
    if (pit != out.doc.values.end() && pit->second.kind == TomlValue::Kind::Array &&
        !tail.empty() && tail.find_first_not_of("0123456789") == std::string::npos) {
      std::size_t idx = static_cast<std::size_t>(std::stoll(tail));
      if (idx >= pit->second.items.size())
        throw ScenarioError("sweep axis '" + axis + "': index out of range");
      if (pit->second.items[idx].kind != TomlValue::Kind::Number)
        throw ScenarioError("sweep axis '" + axis + "' is not a numeric scenario field");
      target = &pit->second.items[idx];
    }
  }
  if (!target) throw ScenarioError("sweep axis '" + axis + "' is not a numeric scenario field");
  target->num = v;
  target->integral = std::floor(v) == v && std::abs(v) < 9e15;
  out.hash = fnv1a64(sd.text + "\n# sweep " + axis + " = " + detail::fmt_double(v));
  return out;
}

// ---------------------------------------------------------------------------
// Shared run helpers.

template <int D>
FieldSolution<D> solve_scenario(const Scenario<D>& sc) {
  return sc.multilevel ? solve_grid_multilevel<D>(sc.law, sc.cfg, sc.bc, sc.grid, sc.opts)
                       : solve_grid<D>(sc.law, sc.cfg, sc.bc, sc.grid, sc.opts);
}

/// Axis-aligned box inside the free region (outside all boundary bands),
/// shared by the standard checks.
template <int D>
SurfaceSpec<D> default_check_surface(const Grid<D>& g, double frac = 0.8, int panels = 24) {
  Vec<D> c{}, half{};
  for (int a = 0; a < D; ++a) {
    c[a] = 0.5 * (g.lo[a] + g.hi[a]);
    double free = 0.5 * (g.hi[a] - g.lo[a]) - (boundary_band_width + 2.0) * g.h[a];
    half[a] = frac * free;
    if (half[a] <= 0.0)
      throw ScenarioError("grid too small to place a diagnostic surface inside the free region");
  }
  return SurfaceSpec<D>::box(c, half, panels);
}

template <int D>
std::vector<std::pair<int, ForceReport<D>>> scenario_forces(const FieldSolution<D>& sol,
                                                            const Scenario<D>& sc) {
  std::vector<int> which = sc.outputs.force_bodies;
  if (which.empty())
    for (int i = 0; i < static_cast<int>(sc.cfg.bodies.size()); ++i) which.push_back(i);
  std::vector<std::pair<int, ForceReport<D>>> out;
  for (int i : which) {
    const Body<D>& b = sc.cfg.bodies[i];
    Vec<D> half{};
    for (int a = 0; a < D; ++a) half[a] = b.bounding_radius() + 2.5 * sol.grid.h[a];
    SurfaceSpec<D> surf = SurfaceSpec<D>::box(b.position, half, 16);
    out.emplace_back(i, force_surface<D>(sol, surf, b.id));
  }
  return out;
}

namespace detail {

template <int D>
bool mixed_sign_sources(const FieldSolution<D>& sol, double* total = nullptr) {
  double mn = 0.0, mx = 0.0, scale = 0.0;
  Kahan q;
  for (std::int64_t k = 0; k < sol.grid.total; ++k) {
    double r = sol.sources.rho[k];
    mn = std::min(mn, r);
    mx = std::max(mx, r);
    scale = std::max(scale, std::abs(r));
    q.add(r);
  }
  if (total) *total = q.s * sol.grid.cell_volume();
  return mn < -1e-12 * scale && mx > 1e-12 * scale;
}

}  // namespace detail

/// The standard single-solution battery. Hypothesis violations surface as
/// "inapplicable" reports, never as thrown errors.
template <int D>
std::vector<DiagnosticsReport> run_checks(const FieldSolution<D>& sol, const Scenario<D>& sc) {
  std::vector<std::string> names = sc.outputs.checks;
  if (names.empty()) names = known_check_names();

  SurfaceSpec<D> surf = default_check_surface<D>(sol.grid);
  std::vector<DiagnosticsReport> out;

  auto inapplicable = [](const std::string& name, const std::string& statement,
                         const std::string& why) {
    DiagnosticsReport r;
    r.name = name;
    r.statement = statement;
    r.status = "inapplicable";
    r.note = why;
    return r;
  };

  for (const std::string& name : names) {
    try {
      if (name == "energy-balance") {
        const std::string st =
            "source and field energy integrals balance the boundary flux on the integration box";
        ScalarVirialReport rep = scalar_virial_identity<D>(sol);
        if (!rep.applicable) {
          out.push_back(inapplicable(name, st, rep.reason));
        } else {
          std::ostringstream note;
          note << "source " << detail::fmt_double(rep.source_term) << ", field "
               << detail::fmt_double(rep.field_term) << ", boundary share "
               << detail::fmt_double(rep.boundary_share);
          out.push_back(
              make_check(name, st, rep.residual, 0.0, sc.check_tolerance, 0.0, note.str()));
        }
      } else if (name == "virial-scalar") {
        const std::string st = "volume and surface virial quadratures agree on the same solution";
        VirialScalar vs = virial_scalar<D>(sol, surf);
        double scale = std::max({std::abs(vs.lhs), std::abs(vs.rhs), 1e-300});
        std::ostringstream note;
        note << "lhs " << detail::fmt_double(vs.lhs) << ", rhs " << detail::fmt_double(vs.rhs);
        out.push_back(make_check(name, st, std::abs(vs.lhs - vs.rhs) / scale, 0.0,
                                 sc.check_tolerance, 0.0, note.str()));
        if (sol.law.conformal() && sol.bc.kind == BoundaryKind::DecayToZero) {
          const std::string st2 =
              "net-charge virial formula matches the measured virial for scale-free media";
          double Q = detail::discrete_total_charge<D>(sol);
          double ref = conformal_virial_reference(sol.law, Q);
          out.push_back(make_check("virial-conformal", st2, vs.lhs, ref,
                                   0.02 * std::abs(ref) + 1e-300, 0.0, ""));
        }
      } else if (name == "virial-vector") {
        const std::string st = "moment-virial volume and surface quadratures agree per component";
        VirialVector<D> uv = virial_vector_U<D>(sol, surf);
        VirialScalar vs = virial_scalar<D>(sol, surf);
        double L = 0.0;
        for (int a = 0; a < D; ++a) L = std::max(L, 0.5 * (sol.grid.hi[a] - sol.grid.lo[a]));
        double scale = std::max({norm<D>(uv.lhs), norm<D>(uv.rhs), std::abs(vs.lhs) * L, 1e-300});
        double worst = 0.0;
        for (int a = 0; a < D; ++a) worst = std::max(worst, std::abs(uv.lhs[a] - uv.rhs[a]));
        out.push_back(make_check(name, st, worst / scale, 0.0, sc.check_tolerance, 0.0, ""));
      } else if (name == "decay") {
        const std::string st = "far-field gradient falls off with the isolated-charge exponent";
        if (sol.bc.kind != BoundaryKind::DecayToZero) {
          out.push_back(inapplicable(name, st, "needs a decay boundary"));
        } else {
          DecayReport d = decay_exponent<D>(sol);
          if (d.has_reference) {
            out.push_back(make_check(name, st, d.grad_slope, d.reference, sc.decay_slope_margin,
                                     d.grad_fit_rms, ""));
          } else {
            std::ostringstream note;
            note << "no net charge: no closed-form exponent; measured slope "
                 << detail::fmt_double(d.grad_slope);
            out.push_back(inapplicable(name, st, note.str()));
          }
        }
      } else if (name == "charge-bound") {
        const std::string st =
            "enclosed charge does not exceed the bare-field reading through a convex surface";
        ChargeBoundReport cb = charge_bound_check<D>(sol, surf);
        if (!cb.applicable) {
          out.push_back(inapplicable(name, st, cb.reason));
        } else {
          DiagnosticsReport r;
          r.name = name;
          r.statement = st;
          r.measured = cb.Q;
          r.reference = cb.Q_star;
          r.tolerance = sc.charge_bound_slack;
          r.status = cb.Q <= cb.Q_star + sc.charge_bound_slack ? "pass" : "fail";
          out.push_back(r);
        }
      } else if (name == "outward-gradient") {
        const std::string st =
            "field gradient points outward through a convex surface enclosing uniform-sign "
            "sources";
        double Q = 0.0;
        if (detail::mixed_sign_sources<D>(sol, &Q)) {
          out.push_back(inapplicable(name, st, "mixed-sign sources"));
        } else if (std::abs(Q) <= 0.0) {
          out.push_back(inapplicable(name, st, "no net source"));
        } else {
          double s = (sol.law.G > 0.0) == (Q > 0.0) ? 1.0 : -1.0;
          GradientField<D> gf(sol);
          double worst = std::numeric_limits<double>::infinity();
          surf.for_each_panel([&](const Vec<D>& x, const Vec<D>& nh, double) {
            worst = std::min(worst, s * dot<D>(gf.at(x), nh));
          });
          DiagnosticsReport r;
          r.name = name;
          r.statement = st;
          r.measured = worst;
          r.status = worst > 0.0 ? "pass" : "fail";
          out.push_back(r);
        }
      }
    } catch (const ConvergenceError&) {
      throw;
    } catch (const std::exception& e) {
      out.push_back(inapplicable(name, "", e.what()));
    }
  }
  return out;
}

/// Outermost radius where the total-charge radial profile reaches w = 0.9,
/// for media with a finite field-strength bound. Reported in run summaries.
template <int D>
std::optional<double> saturation_radius(const MediumLaw& law, const ChargeConfiguration<D>& cfg,
                                        const Grid<D>& g) {
  if (!law.bounded_w()) return std::nullopt;
  double Q = 0.0;
  for (const Body<D>& b : cfg.bodies) Q += total_charge<D>(b, &law);
  if (std::abs(Q) <= 0.0) return std::nullopt;
  double L = 0.0;
  for (int a = 0; a < D; ++a) L = std::max(L, 0.5 * (g.hi[a] - g.lo[a]));
  try {
    RadialSolution rs =
        solve_radial(law, [Q](double) { return Q; }, log_spaced(1e-4 * L, 2.0 * L, 256));
    if (std::isfinite(rs.w09_radius)) return rs.w09_radius;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Deterministic writers. Doubles render with %.17g; map iteration and body
// order are fixed, so identical scenarios yield byte-identical artifacts.

inline std::string artifact_meta_json(std::uint64_t hash) {
  return "\"version\": " + detail::json_string(tool_version()) +
         ", \"scenario_hash\": " + detail::json_string(hash_hex(hash));
}

template <int D>
void write_field_text(std::ostream& os, const FieldSolution<D>& sol, std::uint64_t hash) {
  os << "# mufield " << tool_version() << " scenario " << hash_hex(hash) << "\n";
  os << "# field phi, one cell per line, cell index k = sum_a i[a] * stride[a]\n";
  os << "# D " << D << "\n# n";
  for (int a = 0; a < D; ++a) os << ' ' << sol.grid.n[a];
  os << "\n# lo";
  for (int a = 0; a < D; ++a) os << ' ' << detail::fmt_double(sol.grid.lo[a]);
  os << "\n# hi";
  for (int a = 0; a < D; ++a) os << ' ' << detail::fmt_double(sol.grid.hi[a]);
  os << "\n";
  for (std::int64_t k = 0; k < sol.grid.total; ++k)
    os << detail::fmt_double(sol.phi[k]) << "\n";
}

template <int D>
void write_solution_json(std::ostream& os, const FieldSolution<D>& sol, const Scenario<D>& sc) {
  EnergyReport er = energy<D>(sol);
  double Q = detail::discrete_total_charge<D>(sol);
  os << "{\n  " << artifact_meta_json(sc.hash) << ",\n";
  os << "  \"title\": " << detail::json_string(sc.title) << ",\n";
  os << "  \"seed\": " << sc.seed << ",\n";
  os << "  \"law\": {\"name\": " << detail::json_string(sol.law.name)
     << ", \"beta0\": " << detail::json_number(sol.law.beta0)
     << ", \"a0\": " << detail::json_number(sol.law.a0)
     << ", \"G\": " << detail::json_number(sol.law.G) << ", \"D\": " << sol.law.D
     << ", \"conformal\": " << (sol.law.conformal() ? "true" : "false") << "},\n";
  os << "  \"grid\": {\"n\": [";
  for (int a = 0; a < D; ++a) os << (a ? ", " : "") << sol.grid.n[a];
  os << "], \"lo\": [";
  for (int a = 0; a < D; ++a) os << (a ? ", " : "") << detail::json_number(sol.grid.lo[a]);
  os << "], \"hi\": [";
  for (int a = 0; a < D; ++a) os << (a ? ", " : "") << detail::json_number(sol.grid.hi[a]);
  os << "]},\n";
  os << "  \"boundary\": "
     << detail::json_string(sol.bc.kind == BoundaryKind::DecayToZero ? "decay"
                            : sol.bc.kind == BoundaryKind::UniformGradient
                                ? "uniform-gradient"
                                : "dirichlet")
     << ",\n";
  os << "  \"bodies\": " << sc.cfg.bodies.size() << ",\n";
  os << "  \"total_charge\": " << detail::json_number(Q) << ",\n";
  os << "  \"converged\": " << (sol.converged ? "true" : "false") << ",\n";
  os << "  \"iterations\": " << sol.iterations << ",\n";
  os << "  \"residual\": " << detail::json_number(sol.residual) << ",\n";
  os << "  \"tolerance\": " << detail::json_number(sol.tol) << ",\n";
  os << "  \"saturated_faces\": " << sol.saturated_faces << ",\n";
  os << "  \"energy\": {\"direct\": " << detail::json_number(er.direct)
     << ", \"on_shell\": " << detail::json_number(er.on_shell)
     << ", \"discrepancy\": " << detail::json_number(er.discrepancy)
     << ", \"divergent\": " << (er.divergent ? "true" : "false") << "}\n}\n";
}

template <int D>
void write_forces_jsonl(std::ostream& os,
                        const std::vector<std::pair<int, ForceReport<D>>>& reports,
                        std::uint64_t hash) {
  for (const auto& [idx, rep] : reports) {
    os << "{" << artifact_meta_json(hash) << ", \"index\": " << idx
       << ", \"body\": " << detail::json_string(rep.body_id) << ", \"force\": [";
    for (int a = 0; a < D; ++a) os << (a ? ", " : "") << detail::json_number(rep.force[a]);
    os << "], \"cross_surface_deviation\": " << detail::json_number(rep.cross_surface_deviation)
       << ", \"quadrature_error\": " << detail::json_number(rep.quadrature_error)
       << ", \"surfaces\": [";
    for (std::size_t s = 0; s < rep.surfaces.size(); ++s)
      os << (s ? ", " : "") << detail::json_string(rep.surfaces[s]);
    os << "]}\n";
  }
}

template <int D>
struct SweepRow {
  double axis = 0.0;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  double energy = 0.0;
  std::vector<std::pair<int, ForceReport<D>>> forces;
  int checks_passed = 0, checks_failed = 0, checks_inapplicable = 0;
  std::string check_states;  // "name:status;..."
};

template <int D>
void write_sweep_csv(std::ostream& os, const std::string& axis,
                     const std::vector<SweepRow<D>>& rows, std::uint64_t hash, bool with_forces,
                     bool with_checks) {
  os << "# mufield " << tool_version() << " scenario " << hash_hex(hash) << " axis " << axis
     << "\n";
  os << detail::csv_field(axis) << ",converged,iterations,residual,energy";
  if (with_forces && !rows.empty()) {
    for (const auto& [idx, rep] : rows.front().forces) {
      for (int a = 0; a < D; ++a) os << ",f" << idx << "_" << char('x' + a);
      os << ",f" << idx << "_dev";
    }
  }
  if (with_checks) os << ",checks_passed,checks_failed,checks_inapplicable,checks";
  os << "\n";
  for (const SweepRow<D>& r : rows) {
    os << detail::fmt_double(r.axis) << ',' << (r.converged ? "true" : "false") << ','
       << r.iterations << ',' << detail::fmt_double(r.residual) << ','
       << detail::fmt_double(r.energy);
    if (with_forces) {
      for (const auto& [idx, rep] : r.forces) {
        for (int a = 0; a < D; ++a) os << ',' << detail::fmt_double(rep.force[a]);
        os << ',' << detail::fmt_double(rep.cross_surface_deviation);
      }
    }
    if (with_checks)
      os << ',' << r.checks_passed << ',' << r.checks_failed << ',' << r.checks_inapplicable
         << ',' << detail::csv_field(r.check_states);
    os << "\n";
  }
}

}  // namespace mufield
