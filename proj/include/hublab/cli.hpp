// Copyright 2026 The hublab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Batch front end: INI-style run configurations with per-command schemas,
// deterministic CSV/JSON artifact serialization, config hashing, atomic file
// writes, and the Cartesian sweep driver. The command-line tool is a thin
// argv wrapper around the entry points here, so everything stays testable
// in-process.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hublab/fermi.hpp"
#include "hublab/hubbard.hpp"
#include "hublab/scattering.hpp"
#include "hublab/soft_potential.hpp"
#include "hublab/version.hpp"

namespace hublab {

using Json = nlohmann::ordered_json;

// ---- deterministic number formatting ----------------------------------------

/// Shortest round-trip decimal representation; identical bytes on every run.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Fixed scientific formatting for tables whose contract pins the precision
/// (ten digits after the point).
inline std::string fmt_sci10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10e", v);
  return buf;
}

inline std::string fmt_flag(bool b) { return b ? "1" : "0"; }

// ---- small string utilities --------------------------------------------------

inline std::string trim_copy(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Comma-separated list; elements are trimmed. A blank string is the empty
/// list (zero values), which only the sweep driver treats specially.
inline std::vector<std::string> split_list(std::string_view raw) {
  if (trim_copy(raw).empty()) return {};
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = raw.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim_copy(raw.substr(start)));
      break;
    }
    out.push_back(trim_copy(raw.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline bool valid_key_name(std::string_view k) {
  if (k.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(k[0])) || k[0] == '_'))
    return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_'))
      return false;
  return true;
}

// ---- parameter schemas -------------------------------------------------------

enum class ParamType { kInt, kReal, kCoupling, kWord };

struct ParamSpec {
  std::string key;
  ParamType type = ParamType::kReal;
  bool required = false;
  std::string fallback;              // default raw value when optional
  std::vector<std::string> choices;  // allowed words (kWord only; empty = any)
};

struct CommandSchema {
  std::string name;
  std::vector<ParamSpec> params;

  const ParamSpec* find(std::string_view key) const {
    for (const auto& p : params)
      if (p.key == key) return &p;
    return nullptr;
  }
};

/// Registry of every dispatchable command; `sweep` is a driver, not a
/// schema — its config carries the target command's section.
inline const std::vector<CommandSchema>& command_schemas() {
  static const std::vector<CommandSchema> schemas = {
      {"gamma",
       {{"tol", ParamType::kReal, false, "1e-6", {}},
        {"grid", ParamType::kInt, false, "128", {}}}},
      {"scatter",
       {{"g", ParamType::kCoupling, true, "", {}},
        {"r", ParamType::kInt, false, "4", {}},
        {"r_max", ParamType::kInt, false, "8", {}},
        {"grid", ParamType::kInt, false, "128", {}}}},
      {"phi",
       {{"g", ParamType::kCoupling, true, "", {}},
        {"r_max", ParamType::kInt, false, "16", {}},
        {"grid", ParamType::kInt, false, "128", {}}}},
      {"eos", {{"rho", ParamType::kReal, true, "", {}}}},
      {"filter",
       {{"s", ParamType::kReal, true, "", {}},
        {"Lambda", ParamType::kInt, true, "", {}},
        {"R", ParamType::kInt, false, "1", {}},
        {"eps", ParamType::kReal, false, "0.5", {}},
        {"eta", ParamType::kReal, false, "0.5", {}}}},
      {"dyson-certify",
       {{"g", ParamType::kCoupling, true, "", {}},
        {"R", ParamType::kInt, true, "", {}},
        {"s", ParamType::kReal, true, "", {}},
        {"eps", ParamType::kReal, false, "0.5", {}},
        {"eta", ParamType::kReal, false, "0.5", {}},
        {"C_V", ParamType::kReal, false, "10", {}},
        {"Lambda", ParamType::kInt, true, "", {}},
        {"tol", ParamType::kReal, false, "1e-10", {}}}},
      {"ed",
       {{"L", ParamType::kInt, true, "", {}},
        {"N_u", ParamType::kInt, true, "", {}},
        {"N_d", ParamType::kInt, true, "", {}},
        {"g", ParamType::kCoupling, true, "", {}},
        {"tol", ParamType::kReal, false, "1e-8", {}}}},
      {"lt-check",
       {{"L", ParamType::kInt, true, "", {}},
        {"kind", ParamType::kWord, false, "step", {"step", "exp"}},
        {"amplitude", ParamType::kReal, true, "", {}},
        {"scale", ParamType::kReal, false, "1", {}},
        {"tol", ParamType::kReal, false, "1e-8", {}}}},
      {"trace-check", {{"instances", ParamType::kInt, false, "1000", {}}}},
  };
  return schemas;
}

inline const CommandSchema* find_schema(std::string_view name) {
  for (const auto& s : command_schemas())
    if (s.name == name) return &s;
  return nullptr;
}

inline std::string known_commands_list() {
  std::string out;
  for (const auto& s : command_schemas()) {
    if (!out.empty()) out += ", ";
    out += s.name;
  }
  return out;
}

// ---- typed value parsing -----------------------------------------------------

inline bool parse_int_value(std::string_view raw, std::int64_t& out) {
  const char* b = raw.data();
  const char* e = b + raw.size();
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

inline bool parse_real_value(std::string_view raw, double& out) {
  const char* b = raw.data();
  const char* e = b + raw.size();
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e && std::isfinite(out);
}

/// A coupling literal is "inf" or a nonnegative real.
inline bool parse_coupling_value(std::string_view raw, Coupling& out) {
  if (raw == "inf") {
    out = Coupling::inf();
    return true;
  }
  double v = 0.0;
  if (!parse_real_value(raw, v) || v < 0) return false;
  out = Coupling::finite(v);
  return true;
}

inline const char* param_type_name(ParamType t) {
  switch (t) {
    case ParamType::kInt: return "integer";
    case ParamType::kReal: return "real";
    case ParamType::kCoupling: return "coupling (nonnegative real or inf)";
    case ParamType::kWord: return "word";
  }
  return "value";
}

inline bool value_matches(const ParamSpec& spec, const std::string& raw) {
  switch (spec.type) {
    case ParamType::kInt: {
      std::int64_t v;
      return parse_int_value(raw, v);
    }
    case ParamType::kReal: {
      double v;
      return parse_real_value(raw, v);
    }
    case ParamType::kCoupling: {
      Coupling c;
      return parse_coupling_value(raw, c);
    }
    case ParamType::kWord: {
      if (raw.empty()) return false;
      if (spec.choices.empty()) return true;
      return std::find(spec.choices.begin(), spec.choices.end(), raw) !=
             spec.choices.end();
    }
  }
  return false;
}

// ---- run configuration -------------------------------------------------------

/// One parsed run configuration: the command section plus its raw key/value
/// pairs in file order. Values stay verbatim so serialization round-trips.
struct RunConfig {
  std::string command;
  std::vector<std::pair<std::string, std::string>> params;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : params)
      if (k == key) return &v;
    return nullptr;
  }
};

/// Parse the documented `[command]` + `key = value` format. Structural
/// problems (bad lines, missing/duplicate section) throw immediately; every
/// key-level problem — unknown key, duplicate key, type mismatch, missing
/// required key — is collected so the error names all of them at once.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  bool have_section = false;
  std::vector<std::string> key_errors;

  auto handle_pair = [&](std::string_view line) {
    size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config: malformed line '" +
                                  std::string(line) + "' (expected key = value)");
    std::string key = trim_copy(line.substr(0, eq));
    std::string value = trim_copy(line.substr(eq + 1));
    if (!valid_key_name(key))
      throw std::invalid_argument("config: invalid key name '" + key + "'");
    if (cfg.find(key) != nullptr)
      key_errors.push_back("duplicate key '" + key + "'");
    else
      cfg.params.emplace_back(std::move(key), std::move(value));
  };

  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view rawline =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                      : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

    std::string line = trim_copy(rawline);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;

    if (line[0] == '[') {
      size_t close = line.find(']');
      if (close == std::string::npos)
        throw std::invalid_argument("config: unterminated section header '" +
                                    line + "'");
      std::string name = trim_copy(std::string_view(line).substr(1, close - 1));
      if (have_section)
        throw std::invalid_argument(
            "config: multiple sections; one run configuration holds exactly "
            "one [command] section");
      if (find_schema(name) == nullptr)
        throw std::invalid_argument("config: unknown command section '[" +
                                    name + "]'; known commands: " +
                                    known_commands_list());
      cfg.command = name;
      have_section = true;
      std::string rest = trim_copy(std::string_view(line).substr(close + 1));
      if (!rest.empty()) handle_pair(rest);
      continue;
    }

    if (!have_section)
      throw std::invalid_argument(
          "config: expected a [command] section header before any key");
    handle_pair(line);
  }

  if (!have_section)
    throw std::invalid_argument("config: no [command] section found; known "
                                "commands: " +
                                known_commands_list());

  const CommandSchema& schema = *find_schema(cfg.command);
  for (const auto& [key, value] : cfg.params) {
    const ParamSpec* spec = schema.find(key);
    if (spec == nullptr) {
      key_errors.push_back("unknown key '" + key + "'");
      continue;
    }
    for (const std::string& elem : split_list(value)) {
      if (!value_matches(*spec, elem))
        key_errors.push_back("key '" + key + "': '" + elem + "' is not a " +
                             std::string(param_type_name(spec->type)));
    }
  }
  for (const ParamSpec& spec : schema.params)
    if (spec.required && cfg.find(spec.key) == nullptr)
      key_errors.push_back("missing required key '" + spec.key + "'");

  if (!key_errors.empty()) {
    std::string msg = "config [" + cfg.command + "]: ";
    for (size_t i = 0; i < key_errors.size(); ++i) {
      if (i) msg += "; ";
      msg += key_errors[i];
    }
    throw std::invalid_argument(msg);
  }
  return cfg;
}

/// Canonical text form; parse(serialize(parse(t))) == parse(t).
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out = "[" + cfg.command + "]\n";
  for (const auto& [k, v] : cfg.params) out += k + " = " + v + "\n";
  return out;
}

// ---- config hash ---------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Deterministic identity of a run: canonical config text, seed, and the
/// artifact version. Worker count and output directory are excluded — they
/// must never change numeric content.
inline std::string config_hash(const RunConfig& cfg, std::uint64_t seed) {
  std::string t = serialize_config(cfg);
  t += "seed=" + std::to_string(seed) + "\n";
  t += std::string("version=") + kVersion + "\n";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(t)));
  return buf;
}

// ---- atomic artifact writes ------------------------------------------------------

/// Write-to-temp plus rename; a failed run never leaves a partial artifact.
inline void atomic_write_file(const std::filesystem::path& path,
                              std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("short write: " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- resolved per-point parameters ------------------------------------------------

/// Scalar parameter set for one execution point: every schema key present,
/// declared values first (file order), defaults appended.
struct PointParams {
  const CommandSchema* schema = nullptr;
  std::vector<std::pair<std::string, std::string>> kv;

  const std::string& raw(std::string_view key) const {
    for (const auto& [k, v] : kv)
      if (k == key) return v;
    throw std::logic_error("point parameter missing: " + std::string(key));
  }
  std::int64_t get_int(std::string_view key) const {
    std::int64_t v = 0;
    if (!parse_int_value(raw(key), v))
      throw std::logic_error("point parameter not an integer: " +
                             std::string(key));
    return v;
  }
  double get_real(std::string_view key) const {
    double v = 0;
    if (!parse_real_value(raw(key), v))
      throw std::logic_error("point parameter not a real: " + std::string(key));
    return v;
  }
  Coupling get_coupling(std::string_view key) const {
    Coupling c;
    if (!parse_coupling_value(raw(key), c))
      throw std::logic_error("point parameter not a coupling: " +
                             std::string(key));
    return c;
  }
  Json params_json() const {
    Json j = Json::object();
    for (const auto& [k, v] : kv) j[k] = v;
    return j;
  }
};

namespace detail_cli {

inline void append_defaults(PointParams& p) {
  for (const ParamSpec& spec : p.schema->params) {
    bool declared = false;
    for (const auto& [k, v] : p.kv)
      if (k == spec.key) {
        declared = true;
        break;
      }
    if (!declared) p.kv.emplace_back(spec.key, spec.fallback);
  }
}

}  // namespace detail_cli

/// Single-run resolution: every declared value must be a scalar.
inline PointParams resolve_point(const RunConfig& cfg) {
  PointParams p;
  p.schema = find_schema(cfg.command);
  if (p.schema == nullptr)
    throw std::invalid_argument("unknown command: " + cfg.command);
  for (const auto& [k, v] : cfg.params) {
    auto elems = split_list(v);
    if (elems.size() != 1)
      throw std::invalid_argument(
          "command '" + cfg.command + "' expects a single value for key '" +
          k + "'; lists run under the sweep command");
    p.kv.emplace_back(k, elems[0]);
  }
  detail_cli::append_defaults(p);
  return p;
}

/// Sweep resolution: Cartesian product over the declared lists, first
/// declared key slowest. Errors on an empty axis or an oversized grid.
inline std::vector<PointParams> expand_grid(const RunConfig& cfg) {
  const CommandSchema* schema = find_schema(cfg.command);
  if (schema == nullptr)
    throw std::invalid_argument("unknown command: " + cfg.command);

  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& [k, v] : cfg.params) {
    axes.emplace_back(k, split_list(v));
    if (axes.back().second.empty())
      throw std::invalid_argument("sweep [" + cfg.command +
                                  "]: empty grid — key '" + k +
                                  "' has no values");
  }

  std::size_t total = 1;
  for (const auto& [k, vals] : axes) {
    if (vals.size() > 100000 || total > 1000000 / vals.size())
      throw std::invalid_argument("sweep [" + cfg.command +
                                  "]: grid too large (over 1e6 points)");
    total *= vals.size();
  }

  std::vector<PointParams> points(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    PointParams p;
    p.schema = schema;
    std::size_t rem = idx;
    std::vector<std::size_t> digit(axes.size(), 0);
    for (std::size_t a = axes.size(); a-- > 0;) {
      digit[a] = rem % axes[a].second.size();
      rem /= axes[a].second.size();
    }
    for (std::size_t a = 0; a < axes.size(); ++a)
      p.kv.emplace_back(axes[a].first, axes[a].second[digit[a]]);
    detail_cli::append_defaults(p);
    points[idx] = std::move(p);
  }
  return points;
}

// ---- command execution -----------------------------------------------------------

struct RunContext {
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 1;
  int workers = 1;
  std::string hash;  // config hash, filled by the drivers
};

/// Outcome of one execution point: flat scalar outputs plus one CSV data row.
struct PointResult {
  Json outputs = Json::object();
  std::string csv_row;
};

inline std::string csv_header(std::string_view command) {
  if (command == "gamma") return "tol,grid,gamma,err,method_a,method_b";
  if (command == "scatter")
    return "g,r,r_max,grid,a,ap2_over_4pi,phi0,phi0_closed,sq_residual_max";
  if (command == "phi")
    return "g,r_max,grid,gamma,a,phi0,tail_coefficient,max_weighted_remainder,"
           "cache_file";
  if (command == "eos") return "rho,E_f,e,err_e";
  if (command == "filter")
    return "s,Lambda,R,eps,eta,mass,abs_sum,trunc_radius,trunc_error,f_sum,"
           "u_sum,u_max,w_sum,w_max";
  if (command == "dyson-certify")
    return "g,R,s,eps,eta,C_V,Lambda,min_eig,pass";
  if (command == "ed")
    return "L,N_u,N_d,g,E0,residual,E0_free,dE,pred_8pi_a_NuNd_over_V,ratio,"
           "defect_u,defect_d,IR_1,IR_2,docc";
  if (command == "lt-check")
    return "L,kind,amplitude,scale,dim,min_eig,residual,certified,floor,"
           "f_sum,bound,satisfied";
  if (command == "trace-check") return "seed,instances,violations,min_slack";
  throw std::logic_error("csv_header: unknown command " + std::string(command));
}

namespace detail_cli {

inline std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

inline PointResult cmd_gamma(const PointParams& p, const RunContext&) {
  const double tol = p.get_real("tol");
  const int grid = static_cast<int>(p.get_int("grid"));
  GammaResult r = watson_gamma(tol, grid);
  PointResult out;
  out.outputs["gamma"] = r.gamma;
  out.outputs["err"] = r.err;
  out.outputs["method_a"] = r.method_a;
  out.outputs["method_b"] = r.method_b;
  out.csv_row = join_row({p.raw("tol"), p.raw("grid"), fmt_double(r.gamma),
                          fmt_double(r.err), fmt_double(r.method_a),
                          fmt_double(r.method_b)});
  return out;
}

inline PointResult cmd_scatter(const PointParams& p, const RunContext&) {
  const Coupling g = p.get_coupling("g");
  const int r = static_cast<int>(p.get_int("r"));
  const int r_max = static_cast<int>(p.get_int("r_max"));
  const int grid = static_cast<int>(p.get_int("grid"));
  ScatteringParams sp = make_scattering_params(g, cached_watson_gamma());
  ZeroEnergySolution sol = phi_table(sp, r_max, grid);
  const double ap2 = identity_ap2(sol, r) / (4.0 * std::numbers::pi);
  double res_max = 0.0;
  BoxRegion::cube(r_max).for_each([&](Vec3i x) {
    res_max = std::max(res_max, scattering_equation_residual(sol, x));
  });
  PointResult out;
  out.outputs["a"] = sp.a;
  out.outputs["ap2_over_4pi"] = ap2;
  out.outputs["phi0"] = sol.phi({0, 0, 0});
  out.outputs["phi0_closed"] = sol.phi0_closed;
  out.outputs["sq_residual_max"] = res_max;
  out.csv_row = join_row({p.raw("g"), p.raw("r"), p.raw("r_max"), p.raw("grid"),
                          fmt_double(sp.a), fmt_double(ap2),
                          fmt_double(sol.phi({0, 0, 0})),
                          fmt_double(sol.phi0_closed), fmt_double(res_max)});
  return out;
}

inline PointResult cmd_phi(const PointParams& p, const RunContext& ctx) {
  namespace fs = std::filesystem;
  const Coupling g = p.get_coupling("g");
  const int r_max = static_cast<int>(p.get_int("r_max"));
  const int grid = static_cast<int>(p.get_int("grid"));
  ScatteringParams sp = make_scattering_params(g, cached_watson_gamma());
  ZeroEnergySolution sol = phi_table(sp, r_max, grid);

  double tail = std::numeric_limits<double>::quiet_NaN();
  double remainder = std::numeric_limits<double>::quiet_NaN();
  if (r_max >= 8) {
    DecayReport rep = verify_decay(sol);
    tail = rep.tail_coefficient;
    remainder = rep.max_weighted_remainder;
  }

  const std::string cache_name = "phi_g" + p.raw("g") + "_r" +
                                 std::to_string(r_max) + "_n" +
                                 std::to_string(grid) + ".bin";
  fs::create_directories(ctx.out_dir);
  fs::path cache = ctx.out_dir / cache_name;
  fs::path tmp = cache;
  tmp += ".tmp";
  save_phi_cache(sol, tmp.string());
  fs::rename(tmp, cache);

  PointResult out;
  out.outputs["gamma"] = sp.gamma;
  out.outputs["a"] = sp.a;
  out.outputs["phi0"] = sol.phi({0, 0, 0});
  out.outputs["tail_coefficient"] = tail;
  out.outputs["max_weighted_remainder"] = remainder;
  out.outputs["cache_file"] = cache_name;
  out.csv_row = join_row({p.raw("g"), p.raw("r_max"), p.raw("grid"),
                          fmt_double(sp.gamma), fmt_double(sp.a),
                          fmt_double(sol.phi({0, 0, 0})), fmt_double(tail),
                          fmt_double(remainder), cache_name});
  return out;
}

inline PointResult cmd_eos(const PointParams& p, const RunContext&) {
  EosPoint pt = eos_point(p.get_real("rho"));
  PointResult out;
  out.outputs["rho"] = pt.rho;
  out.outputs["E_f"] = pt.fermi_energy;
  out.outputs["e"] = pt.energy_density;
  out.outputs["err_e"] = pt.err;
  out.csv_row = join_row({fmt_sci10(pt.rho), fmt_sci10(pt.fermi_energy),
                          fmt_sci10(pt.energy_density), fmt_sci10(pt.err)});
  return out;
}

inline FilterPair make_filter(double s, int lambda) {
  return s == 0.0 ? trivial_filter(lambda) : build_filter(s, lambda);
}

inline PointResult cmd_filter(const PointParams& p, const RunContext&) {
  const double s = p.get_real("s");
  const int lambda = static_cast<int>(p.get_int("Lambda"));
  const int R = static_cast<int>(p.get_int("R"));
  const double eps = p.get_real("eps");
  const double eta = p.get_real("eta");
  FilterPair pair = make_filter(s, lambda);
  SoftPotentialSet set = build_soft_set(pair, R, eps, eta);
  PointResult out;
  out.outputs["mass"] = pair.mass;
  out.outputs["abs_sum"] = pair.abs_sum;
  out.outputs["trunc_radius"] = pair.trunc_radius;
  out.outputs["trunc_error"] = pair.trunc_error;
  out.outputs["f_sum"] = set.f_sum;
  out.outputs["u_sum"] = set.u_sum;
  out.outputs["u_max"] = set.u_max;
  out.outputs["w_sum"] = set.w_sum;
  out.outputs["w_max"] = set.w_max;
  out.csv_row = join_row(
      {p.raw("s"), p.raw("Lambda"), p.raw("R"), p.raw("eps"), p.raw("eta"),
       fmt_double(pair.mass), fmt_double(pair.abs_sum),
       std::to_string(pair.trunc_radius), fmt_double(pair.trunc_error),
       fmt_double(set.f_sum), fmt_double(set.u_sum), fmt_double(set.u_max),
       fmt_double(set.w_sum), fmt_double(set.w_max)});
  return out;
}

inline PointResult cmd_certify(const PointParams& p, const RunContext&) {
  const Coupling g = p.get_coupling("g");
  const int R = static_cast<int>(p.get_int("R"));
  const double s = p.get_real("s");
  const double eps = p.get_real("eps");
  const double eta = p.get_real("eta");
  const double c_v = p.get_real("C_V");
  const int lambda = static_cast<int>(p.get_int("Lambda"));
  const double tol = p.get_real("tol");
  FilterPair pair = make_filter(s, lambda);
  SoftPotentialSet set = build_soft_set(pair, R, eps, eta);
  CertificationReport rep = certify_soft_bound(g, pair, set, lambda, c_v, tol);
  PointResult out;
  out.outputs["min_eig"] = rep.min_eig;
  out.outputs["pass"] = rep.pass;
  out.outputs["residual"] = rep.residual;
  out.outputs["certified"] = rep.certified;
  out.outputs["lhs_norm"] = rep.lhs_norm;
  out.outputs["tolerance"] = rep.tolerance;
  out.outputs["iterations"] = rep.iterations;
  out.outputs["lambda_rule_ok"] = rep.lambda_rule_ok;
  out.outputs["rhs_nonpositive"] = rep.rhs_nonpositive;
  out.csv_row = join_row({p.raw("g"), p.raw("R"), p.raw("s"), p.raw("eps"),
                          p.raw("eta"), p.raw("C_V"), p.raw("Lambda"),
                          fmt_double(rep.min_eig), fmt_flag(rep.pass)});
  return out;
}

inline PointResult cmd_ed(const PointParams& p, const RunContext&) {
  const int L = static_cast<int>(p.get_int("L"));
  const int n_u = static_cast<int>(p.get_int("N_u"));
  const int n_d = static_cast<int>(p.get_int("N_d"));
  const Coupling g = p.get_coupling("g");
  const double tol = p.get_real("tol");
  ShiftRow row = interaction_shift(L, n_u, n_d, g, tol);
  PointResult out;
  out.outputs["E0"] = row.e0;
  out.outputs["residual"] = row.residual;
  out.outputs["E0_free"] = row.e0_free;
  out.outputs["dE"] = row.de;
  out.outputs["pred_8pi_a_NuNd_over_V"] = row.pred;
  out.outputs["ratio"] = row.ratio;
  out.outputs["defect_u"] = row.defect_u;
  out.outputs["defect_d"] = row.defect_d;
  out.outputs["IR_1"] = row.ir1;
  out.outputs["IR_2"] = row.ir2;
  out.outputs["docc"] = row.docc;
  out.outputs["V_eff"] = row.v_eff;
  out.outputs["a_ext"] = row.a_ext;
  out.csv_row = join_row(
      {p.raw("L"), p.raw("N_u"), p.raw("N_d"), p.raw("g"), fmt_double(row.e0),
       fmt_double(row.residual), fmt_double(row.e0_free), fmt_double(row.de),
       fmt_double(row.pred), fmt_double(row.ratio), fmt_double(row.defect_u),
       fmt_double(row.defect_d), fmt_double(row.ir1), fmt_double(row.ir2),
       fmt_double(row.docc)});
  return out;
}

inline PointResult cmd_lt_check(const PointParams& p, const RunContext&) {
  const int L = static_cast<int>(p.get_int("L"));
  PotentialSpec f;
  f.kind = p.raw("kind") == "exp" ? PotentialSpec::Kind::kExponential
                                  : PotentialSpec::Kind::kStep;
  f.amplitude = p.get_real("amplitude");
  f.scale = p.get_real("scale");
  LtReport rep = lt_check(L, f, p.get_real("tol"));
  PointResult out;
  out.outputs["dim"] = rep.dim;
  out.outputs["min_eig"] = rep.min_eig;
  out.outputs["residual"] = rep.residual;
  out.outputs["certified"] = rep.certified;
  out.outputs["floor"] = rep.floor;
  out.outputs["f_sum"] = rep.f_sum;
  out.outputs["bound"] = rep.bound;
  out.outputs["satisfied"] = rep.satisfied;
  out.csv_row = join_row(
      {p.raw("L"), p.raw("kind"), p.raw("amplitude"), p.raw("scale"),
       std::to_string(rep.dim), fmt_double(rep.min_eig),
       fmt_double(rep.residual), fmt_double(rep.certified),
       fmt_double(rep.floor), fmt_double(rep.f_sum), fmt_double(rep.bound),
       fmt_flag(rep.satisfied)});
  return out;
}

inline PointResult cmd_trace_check(const PointParams& p, const RunContext& ctx) {
  const int instances = static_cast<int>(p.get_int("instances"));
  TraceCheckReport rep = trace_bound_check(ctx.seed, instances);
  PointResult out;
  out.outputs["seed"] = ctx.seed;
  out.outputs["instances"] = rep.instances;
  out.outputs["violations"] = rep.violations;
  out.outputs["min_slack"] = rep.min_slack;
  out.csv_row = join_row({std::to_string(ctx.seed), std::to_string(rep.instances),
                          std::to_string(rep.violations),
                          fmt_double(rep.min_slack)});
  return out;
}

}  // namespace detail_cli

inline PointResult run_point(const PointParams& p, const RunContext& ctx) {
  const std::string& c = p.schema->name;
  if (c == "gamma") return detail_cli::cmd_gamma(p, ctx);
  if (c == "scatter") return detail_cli::cmd_scatter(p, ctx);
  if (c == "phi") return detail_cli::cmd_phi(p, ctx);
  if (c == "eos") return detail_cli::cmd_eos(p, ctx);
  if (c == "filter") return detail_cli::cmd_filter(p, ctx);
  if (c == "dyson-certify") return detail_cli::cmd_certify(p, ctx);
  if (c == "ed") return detail_cli::cmd_ed(p, ctx);
  if (c == "lt-check") return detail_cli::cmd_lt_check(p, ctx);
  if (c == "trace-check") return detail_cli::cmd_trace_check(p, ctx);
  throw std::logic_error("run_point: unknown command " + c);
}

// ---- artifact assembly -------------------------------------------------------------

inline std::string meta_line(const RunContext& ctx) {
  return std::string("# artifact_version=") + kVersion +
         " config_hash=" + ctx.hash + "\n";
}

inline std::string csv_artifact(std::string_view command,
                                const std::vector<std::string>& rows,
                                const RunContext& ctx) {
  std::string out = meta_line(ctx);
  out += csv_header(command);
  out += '\n';
  for (const std::string& r : rows) {
    out += r;
    out += '\n';
  }
  return out;
}

inline std::string json_artifact(const Json& body) {
  return body.dump(2) + "\n";
}

inline Json json_meta(std::string_view command, const RunContext& ctx) {
  Json j = Json::object();
  j["artifact_version"] = kVersion;
  j["config_hash"] = ctx.hash;
  j["command"] = std::string(command);
  return j;
}

// ---- single-run driver ----------------------------------------------------------------

/// One completed run: parameters, scalar outputs, and the files written.
/// Wall time is carried for reporting only and never serialized.
struct ResultRecord {
  std::string command;
  std::vector<std::pair<std::string, std::string>> params;
  Json outputs;
  double wall_seconds = 0.0;
  std::string artifact_version = kVersion;
  std::string config_hash;
  std::vector<std::string> files;
};

inline ResultRecord run_single(const RunConfig& cfg, RunContext ctx) {
  PointParams p = resolve_point(cfg);
  ctx.hash = config_hash(cfg, ctx.seed);

  const auto t0 = std::chrono::steady_clock::now();
  PointResult res = run_point(p, ctx);
  const auto t1 = std::chrono::steady_clock::now();

  Json body = json_meta(cfg.command, ctx);
  body["params"] = p.params_json();
  for (auto& [k, v] : res.outputs.items()) body[k] = v;

  const std::string base = cfg.command;
  atomic_write_file(ctx.out_dir / (base + ".json"), json_artifact(body));
  atomic_write_file(ctx.out_dir / (base + ".csv"),
                    csv_artifact(cfg.command, {res.csv_row}, ctx));

  ResultRecord rec;
  rec.command = cfg.command;
  rec.params = p.kv;
  rec.outputs = std::move(res.outputs);
  rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  rec.config_hash = ctx.hash;
  rec.files = {base + ".json", base + ".csv"};
  return rec;
}

// ---- sweep driver ------------------------------------------------------------------------

struct SweepOutcome {
  int total = 0;
  int failed = 0;
  std::vector<std::string> statuses;  // "ok" or "error: ..."
  std::vector<std::string> files;     // artifacts written (combined + manifest)
  double wall_seconds = 0.0;
};

/// Cartesian sweep: points run concurrently up to the worker count, each
/// point owns its output file, failures are recorded and the sweep
/// continues. Combined CSV and manifest are written after the join in point
/// order, so artifacts are byte-identical at any worker count.
inline SweepOutcome run_sweep(const RunConfig& cfg, RunContext ctx) {
  std::vector<PointParams> points = expand_grid(cfg);
  ctx.hash = config_hash(cfg, ctx.seed);

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = points.size();
  std::vector<PointResult> results(n);
  std::vector<std::string> statuses(n);

  const int workers =
      std::max(1, std::min<int>(ctx.workers, static_cast<int>(n)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        results[i] = run_point(points[i], ctx);
        statuses[i] = "ok";
      } catch (const std::exception& e) {
        statuses[i] = std::string("error: ") + e.what();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const std::string base = cfg.command;
  SweepOutcome out;
  out.total = static_cast<int>(n);
  out.statuses = statuses;

  std::vector<std::string> rows;
  Json manifest_points = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    char idx[16];
    std::snprintf(idx, sizeof(idx), "%04zu", i);
    const std::string point_file = base + "_point_" + idx + ".csv";
    Json entry = Json::object();
    entry["index"] = i;
    entry["params"] = points[i].params_json();
    entry["status"] = statuses[i];
    if (statuses[i] == "ok") {
      rows.push_back(results[i].csv_row);
      atomic_write_file(ctx.out_dir / point_file,
                        csv_artifact(cfg.command, {results[i].csv_row}, ctx));
      entry["file"] = point_file;
      out.files.push_back(point_file);
    } else {
      ++out.failed;
      entry["file"] = nullptr;
    }
    manifest_points.push_back(std::move(entry));
  }

  const std::string sweep_file = base + "_sweep.csv";
  atomic_write_file(ctx.out_dir / sweep_file,
                    csv_artifact(cfg.command, rows, ctx));
  out.files.push_back(sweep_file);

  Json manifest = json_meta(cfg.command, ctx);
  manifest["seed"] = ctx.seed;
  manifest["total_points"] = out.total;
  manifest["failed_points"] = out.failed;
  manifest["points"] = std::move(manifest_points);
  atomic_write_file(ctx.out_dir / "manifest.json", json_artifact(manifest));
  out.files.push_back("manifest.json");

  const auto t1 = std::chrono::steady_clock::now();
  out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  return out;
}

}  // namespace hublab
