#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nilheat/assembly.hpp"
#include "nilheat/gft.hpp"
#include "nilheat/lie.hpp"
#include "nilheat/monte_carlo.hpp"
#include "nilheat/orbit.hpp"
#include "nilheat/schrodinger.hpp"
#include "nilheat/short_time.hpp"

namespace nilheat::cli {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum ExitCode { kOk = 0, kValidationFailure = 1, kConfigError = 2, kNotConverged = 3 };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Format { csv, json };
enum class Coordinates { group, exponential };

/// One grid axis: `name=lo:hi:count`.
struct GridAxis {
    std::string name;
    double lo = 0.0, hi = 0.0;
    int count = 1;
};

struct ReducedTable {
    double x_min = -2.0, x_max = 2.0;
    int points = 21;
    int eigenvalues = 10;
};

struct RunConfig {
    int n = 2;
    double t = 0.5;
    Coordinates coordinates = Coordinates::group;
    std::vector<std::vector<double>> points;
    std::vector<GridAxis> grid;
    std::vector<double> lambda;
    QuadratureConfig quadrature;
    SolverConfig solver;
    ReducedTable reduced;
    SDEConfig sde;
    bool c_P_auto = false;
    std::string c_P_sidecar;
    double t_max = kShortTimeMax;
    std::string suite = "all";
    std::string out;
    Format format = Format::csv;
};

// ---------------------------------------------------------------- parsing

namespace detail {

inline std::vector<double> parse_list(const std::string& s, const std::string& field) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(field + ": cannot parse '" + item + "' as a number");
        }
    }
    if (v.empty()) throw ConfigError(field + ": empty list");
    return v;
}

inline std::vector<GridAxis> parse_grid(const std::string& s) {
    std::vector<GridAxis> axes;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("grid: expected name=lo:hi:count, got '" + item + "'");
        GridAxis ax;
        ax.name = item.substr(0, eq);
        std::stringstream rs(item.substr(eq + 1));
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(rs, part, ':')) parts.push_back(part);
        if (parts.size() != 3) throw ConfigError("grid: expected name=lo:hi:count, got '" + item + "'");
        const auto v = parse_list(parts[0] + "," + parts[1] + "," + parts[2], "grid");
        ax.lo = v[0];
        ax.hi = v[1];
        if (v[2] != std::floor(v[2]) || v[2] < 1) throw ConfigError("grid: count must be a positive integer");
        ax.count = static_cast<int>(v[2]);
        axes.push_back(ax);
    }
    return axes;
}

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + key + ": wrong type");
    }
}

template <class T>
void maybe(const json& obj, const std::string& key, T& target, const std::string& where = "") {
    if (obj.contains(key)) target = get<T>(obj, key, where);
}

inline QuadratureRule parse_rule(const std::string& s) {
    if (s == "gauss_legendre") return QuadratureRule::tensor_gauss_legendre;
    if (s == "tanh_sinh") return QuadratureRule::tanh_sinh;
    throw ConfigError("quadrature.rule: expected gauss_legendre or tanh_sinh");
}

inline ReducedPath parse_path(const std::string& s) {
    if (s == "automatic") return ReducedPath::automatic;
    if (s == "mehler") return ReducedPath::mehler;
    if (s == "spectral") return ReducedPath::spectral;
    throw ConfigError("quadrature.path: expected automatic, mehler or spectral");
}

inline Format parse_format(const std::string& s) {
    if (s == "csv") return Format::csv;
    if (s == "json") return Format::json;
    throw ConfigError("format: expected csv or json");
}

inline Coordinates parse_coordinates(const std::string& s) {
    if (s == "group") return Coordinates::group;
    if (s == "exponential") return Coordinates::exponential;
    throw ConfigError("coordinates: expected group or exponential");
}

}  // namespace detail

/// Applies a JSON config object; unknown keys are rejected at every level.
inline void apply_json(RunConfig& cfg, const json& j) {
    using detail::get;
    using detail::maybe;
    detail::check_keys(j,
                       {"n", "t", "coordinates", "points", "grid", "lambda", "quadrature", "solver", "reduced", "sde",
                        "c_P", "c_P_sidecar", "t_max", "suite", "out", "format"},
                       "config");
    maybe(j, "n", cfg.n);
    maybe(j, "t", cfg.t);
    if (j.contains("coordinates")) cfg.coordinates = detail::parse_coordinates(get<std::string>(j, "coordinates", ""));
    maybe(j, "points", cfg.points);
    if (j.contains("grid")) cfg.grid = detail::parse_grid(get<std::string>(j, "grid", ""));
    maybe(j, "lambda", cfg.lambda);
    if (j.contains("quadrature")) {
        const auto& q = j.at("quadrature");
        const std::string w = "quadrature.";
        detail::check_keys(q,
                           {"lambda_box", "lambda_nodes", "x_radius", "x_nodes", "rule", "decay_cut", "mode_cut",
                            "refine", "estimate_error", "tolerance", "path"},
                           "quadrature");
        auto& c = cfg.quadrature;
        maybe(q, "lambda_box", c.lambda_box, w);
        maybe(q, "lambda_nodes", c.lambda_nodes, w);
        maybe(q, "x_radius", c.x_radius, w);
        maybe(q, "x_nodes", c.x_nodes, w);
        if (q.contains("rule")) c.rule = detail::parse_rule(get<std::string>(q, "rule", w));
        maybe(q, "decay_cut", c.decay_cut, w);
        maybe(q, "mode_cut", c.mode_cut, w);
        maybe(q, "refine", c.refine, w);
        maybe(q, "estimate_error", c.estimate_error, w);
        maybe(q, "tolerance", c.tolerance, w);
        if (q.contains("path")) c.path = detail::parse_path(get<std::string>(q, "path", w));
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        const std::string w = "solver.";
        detail::check_keys(s, {"num_modes", "quadrature", "scale_policy", "scale", "center"}, "solver");
        maybe(s, "num_modes", cfg.solver.num_modes, w);
        maybe(s, "quadrature", cfg.solver.quadrature, w);
        if (s.contains("scale_policy")) {
            const auto p = get<std::string>(s, "scale_policy", w);
            if (p != "automatic" && p != "fixed") throw ConfigError("solver.scale_policy: expected automatic or fixed");
            cfg.solver.scale_policy = p == "fixed" ? ScalePolicy::fixed : ScalePolicy::automatic;
        }
        maybe(s, "scale", cfg.solver.scale, w);
        maybe(s, "center", cfg.solver.center, w);
    }
    if (j.contains("reduced")) {
        const auto& r = j.at("reduced");
        const std::string w = "reduced.";
        detail::check_keys(r, {"x_min", "x_max", "points", "eigenvalues"}, "reduced");
        maybe(r, "x_min", cfg.reduced.x_min, w);
        maybe(r, "x_max", cfg.reduced.x_max, w);
        maybe(r, "points", cfg.reduced.points, w);
        maybe(r, "eigenvalues", cfg.reduced.eigenvalues, w);
    }
    if (j.contains("sde")) {
        const auto& s = j.at("sde");
        const std::string w = "sde.";
        detail::check_keys(s, {"num_paths", "num_steps", "seed", "bandwidth", "antithetic"}, "sde");
        maybe(s, "num_paths", cfg.sde.num_paths, w);
        maybe(s, "num_steps", cfg.sde.num_steps, w);
        maybe(s, "seed", cfg.sde.seed, w);
        maybe(s, "bandwidth", cfg.sde.bandwidth, w);
        maybe(s, "antithetic", cfg.sde.antithetic, w);
    }
    if (j.contains("c_P")) {
        const auto& c = j.at("c_P");
        if (c.is_string() && c.get<std::string>() == "auto") {
            cfg.c_P_auto = true;
        } else if (c.is_number()) {
            cfg.c_P_auto = false;
            cfg.quadrature.c_P = c.get<double>();
        } else {
            throw ConfigError("c_P: expected a number or \"auto\"");
        }
    }
    maybe(j, "c_P_sidecar", cfg.c_P_sidecar);
    maybe(j, "t_max", cfg.t_max);
    maybe(j, "suite", cfg.suite);
    maybe(j, "out", cfg.out);
    if (j.contains("format")) cfg.format = detail::parse_format(get<std::string>(j, "format", ""));
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
    }
    RunConfig cfg;
    apply_json(cfg, j);
    return cfg;
}

/// Echo of the effective configuration, in a fixed key order.
inline ojson config_json(const RunConfig& c) {
    ojson j;
    j["n"] = c.n;
    j["t"] = c.t;
    j["coordinates"] = c.coordinates == Coordinates::group ? "group" : "exponential";
    j["points"] = c.points;
    std::string grid;
    for (const auto& ax : c.grid) {
        if (!grid.empty()) grid += ',';
        std::ostringstream os;
        os.precision(17);
        os << ax.name << '=' << ax.lo << ':' << ax.hi << ':' << ax.count;
        grid += os.str();
    }
    j["grid"] = grid;
    j["lambda"] = c.lambda;
    const auto& q = c.quadrature;
    j["quadrature"] = ojson{{"lambda_box", q.lambda_box},
                            {"lambda_nodes", q.lambda_nodes},
                            {"x_radius", q.x_radius},
                            {"x_nodes", q.x_nodes},
                            {"rule", q.rule == QuadratureRule::tanh_sinh ? "tanh_sinh" : "gauss_legendre"},
                            {"decay_cut", q.decay_cut},
                            {"mode_cut", q.mode_cut},
                            {"refine", q.refine},
                            {"estimate_error", q.estimate_error},
                            {"tolerance", q.tolerance},
                            {"path", q.path == ReducedPath::mehler     ? "mehler"
                                     : q.path == ReducedPath::spectral ? "spectral"
                                                                       : "automatic"}};
    j["solver"] = ojson{{"num_modes", c.solver.num_modes},
                        {"quadrature", c.solver.quadrature},
                        {"scale_policy", c.solver.scale_policy == ScalePolicy::fixed ? "fixed" : "automatic"},
                        {"scale", c.solver.scale},
                        {"center", c.solver.center}};
    j["reduced"] = ojson{{"x_min", c.reduced.x_min},
                         {"x_max", c.reduced.x_max},
                         {"points", c.reduced.points},
                         {"eigenvalues", c.reduced.eigenvalues}};
    j["sde"] = ojson{{"num_paths", c.sde.num_paths},
                     {"num_steps", c.sde.num_steps},
                     {"seed", c.sde.seed},
                     {"bandwidth", c.sde.bandwidth},
                     {"antithetic", c.sde.antithetic}};
    j["c_P"] = c.quadrature.c_P;
    j["t_max"] = c.t_max;
    j["suite"] = c.suite;
    j["format"] = c.format == Format::csv ? "csv" : "json";
    return j;
}

// ---------------------------------------------------------------- output

using Cell = std::variant<std::monostate, double, long long, bool, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string csv_cell(const Cell& c) {
    if (std::holds_alternative<double>(c)) return format_double(std::get<double>(c));
    if (std::holds_alternative<long long>(c)) return std::to_string(std::get<long long>(c));
    if (std::holds_alternative<bool>(c)) return std::get<bool>(c) ? "true" : "false";
    if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
    return "";
}

inline ojson json_cell(const Cell& c) {
    if (std::holds_alternative<double>(c)) return std::get<double>(c);
    if (std::holds_alternative<long long>(c)) return std::get<long long>(c);
    if (std::holds_alternative<bool>(c)) return std::get<bool>(c);
    if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
    return nullptr;
}

}  // namespace detail

/// CSV with a header row, or one JSON object with schema_version, config, rows and
/// diagnostics. For CSV the diagnostics go to `diag` as one JSON line.
inline void write_result(const std::string& command, const RunConfig& cfg, const Table& table,
                         const ojson& diagnostics, std::ostream& out, std::ostream& diag) {
    std::ostringstream os;
    if (cfg.format == Format::csv) {
        for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
        os << '\n';
        for (const auto& row : table.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << detail::csv_cell(row[i]);
            os << '\n';
        }
        diag << "diagnostics: " << diagnostics.dump() << '\n';
    } else {
        ojson j;
        j["schema_version"] = kSchemaVersion;
        j["command"] = command;
        j["config"] = config_json(cfg);
        ojson rows = ojson::array();
        for (const auto& row : table.rows) {
            ojson r;
            for (std::size_t i = 0; i < row.size(); ++i) r[table.columns[i]] = detail::json_cell(row[i]);
            rows.push_back(std::move(r));
        }
        j["rows"] = std::move(rows);
        j["diagnostics"] = diagnostics;
        os << j.dump(2) << '\n';
    }
    if (cfg.out.empty()) {
        out << os.str();
    } else {
        std::ofstream f(cfg.out, std::ios::binary);
        if (!f) throw ConfigError("out: cannot write '" + cfg.out + "'");
        f << os.str();
    }
}

// ---------------------------------------------------------------- shared helpers

inline void validate_config(const RunConfig& cfg) {
    (void)GroupSpec(cfg.n);
    if (!(cfg.t > 0.0) || !std::isfinite(cfg.t)) throw ConfigError("t: must be a positive number");
    if (!(cfg.t_max > 0.0)) throw ConfigError("t_max: must be positive");
    cfg.quadrature.validate();
    for (const auto& p : cfg.points)
        if (p.size() != static_cast<std::size_t>(cfg.n + 1))
            throw ConfigError("point: expected n + 1 = " + std::to_string(cfg.n + 1) + " coordinates");
    if (cfg.solver.num_modes < 4) throw ConfigError("solver.num_modes: must be >= 4");
    if (cfg.reduced.points < 1 || cfg.reduced.eigenvalues < 0) throw ConfigError("reduced: counts must be positive");
}

inline std::vector<std::string> coordinate_names(const RunConfig& cfg) {
    std::vector<std::string> names{"a"};
    if (cfg.coordinates == Coordinates::exponential && cfg.n == 2) return {"a", "b", "c"};
    for (int k = 1; k <= cfg.n; ++k) names.push_back((cfg.coordinates == Coordinates::group ? "z" : "b") + std::to_string(k));
    return names;
}

/// Evaluation points in the configured coordinates: the grid (other coordinates from
/// the first point) if given, else the points, else the identity.
inline std::vector<std::vector<double>> resolve_points(const RunConfig& cfg) {
    const auto names = coordinate_names(cfg);
    std::vector<double> base(names.size(), 0.0);
    if (!cfg.points.empty()) base = cfg.points.front();
    if (cfg.grid.empty()) return cfg.points.empty() ? std::vector<std::vector<double>>{base} : cfg.points;
    std::vector<std::size_t> axis_index;
    for (const auto& ax : cfg.grid) {
        const auto it = std::find(names.begin(), names.end(), ax.name);
        if (it == names.end()) throw ConfigError("grid: unknown axis '" + ax.name + "'");
        axis_index.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    std::vector<std::vector<double>> out;
    std::vector<int> idx(cfg.grid.size(), 0);
    for (;;) {
        auto p = base;
        for (std::size_t k = 0; k < cfg.grid.size(); ++k) {
            const auto& ax = cfg.grid[k];
            p[axis_index[k]] = ax.count == 1 ? ax.lo : ax.lo + (ax.hi - ax.lo) * idx[k] / (ax.count - 1);
        }
        out.push_back(std::move(p));
        std::size_t k = cfg.grid.size();
        while (k > 0 && ++idx[k - 1] == cfg.grid[k - 1].count) idx[--k] = 0;
        if (k == 0) break;
    }
    return out;
}

inline GroupElement to_group(const RunConfig& cfg, const std::vector<double>& p) {
    const GroupSpec spec(cfg.n);
    if (cfg.coordinates == Coordinates::group) return {p[0], std::vector<double>(p.begin() + 1, p.end())};
    return exp_coordinates(spec, AlgebraElement{p[0], std::vector<double>(p.begin() + 1, p.end())});
}

inline DualParameter require_lambda(const RunConfig& cfg) {
    if (cfg.n < 2) throw ConfigError("n: reduced kernels need n >= 2");
    if (cfg.lambda.size() != static_cast<std::size_t>(cfg.n - 1))
        throw ConfigError("lambda: expected n - 1 = " + std::to_string(cfg.n - 1) + " values");
    if (cfg.lambda.back() == 0.0) throw ConfigError("lambda: the last entry must be nonzero");
    return DualParameter{cfg.lambda};
}

/// c_P from Plancherel calibration on a Gaussian, written to a sidecar file that
/// must not exist yet.
inline double auto_calibrate(const RunConfig& cfg, ojson& diag) {
    if (cfg.n < 2 || cfg.n > 3) throw ConfigError("c_P: automatic calibration supports n = 2 or 3");
    const std::string path =
        !cfg.c_P_sidecar.empty() ? cfg.c_P_sidecar : (cfg.out.empty() ? "nilheat.c_P.json" : cfg.out + ".c_P.json");
    if (std::filesystem::exists(path))
        throw ConfigError("c_P: sidecar '" + path + "' exists; pass its value explicitly as c_P");
    const GroupSpec spec(cfg.n);
    const auto prof = cfg.n == 2 ? gaussian_profile(2, 0.4, 1.0, 24) : gaussian_profile(3, 0.25, 1.0, 20);
    const double c = calibrate_plancherel(spec, prof.f, prof.box, prof.cfg);
    std::ofstream f(path);
    if (!f) throw ConfigError("c_P: cannot write sidecar '" + path + "'");
    f << ojson{{"schema_version", kSchemaVersion}, {"n", cfg.n}, {"c_P", c}}.dump(2) << '\n';
    diag["c_P_sidecar"] = path;
    return c;
}

inline double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

// ---------------------------------------------------------------- commands

inline int cmd_kernel(RunConfig cfg, std::ostream& out, std::ostream& diag_out) {
    ojson diag;
    diag["c_P_source"] = cfg.c_P_auto ? "auto" : "config";
    if (cfg.c_P_auto) cfg.quadrature.c_P = auto_calibrate(cfg, diag);
    const GroupSpec spec(cfg.n);
    const auto pts = resolve_points(cfg);
    std::vector<GroupElement> g;
    for (const auto& p : pts) g.push_back(to_group(cfg, p));
    const auto est = heat_kernel_batch(spec, cfg.t, g, cfg.quadrature);
    Table table;
    table.columns = coordinate_names(cfg);
    for (const char* c : {"t", "p_t", "trunc_error", "converged"}) table.columns.emplace_back(c);
    long long bad = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<Cell> row(pts[i].begin(), pts[i].end());
        row.emplace_back(cfg.t);
        row.emplace_back(est[i].value);
        row.emplace_back(est[i].trunc_error);
        row.emplace_back(est[i].converged);
        if (!est[i].converged) ++bad;
        table.rows.push_back(std::move(row));
    }
    diag["c_P"] = cfg.quadrature.c_P;
    diag["config_hash"] = cfg.quadrature.hash();
    diag["not_converged"] = bad;
    write_result("kernel", cfg, table, diag, out, diag_out);
    return bad ? kNotConverged : kOk;
}

inline int cmd_reduced(const RunConfig& cfg, std::ostream& out, std::ostream& diag_out) {
    const GroupSpec spec(cfg.n);
    const auto lam = require_lambda(cfg);
    if (!(cfg.reduced.x_max >= cfg.reduced.x_min)) throw ConfigError("reduced: need x_max >= x_min");
    const auto k = spectral_solve(reduced_potential(spec, lam), cfg.solver);
    Table table;
    table.columns = {"kind", "index", "x", "y", "value", "error"};
    const int ne = std::min(cfg.reduced.eigenvalues, k.num_modes);
    for (int j = 0; j < ne; ++j)
        table.rows.push_back({std::string("eigenvalue"), static_cast<long long>(j), std::monostate{}, std::monostate{},
                              k.eigenvalues(j), k.top_share(j)});
    const int m = cfg.reduced.points;
    auto xi = [&](int i) {
        return m == 1 ? cfg.reduced.x_min : cfg.reduced.x_min + (cfg.reduced.x_max - cfg.reduced.x_min) * i / (m - 1);
    };
    bool flagged = false;
    double tail = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const auto v = kernel_eval(k, cfg.t, xi(i), xi(j));
            flagged = flagged || v.flagged;
            tail = v.basis_tail;
            table.rows.push_back({std::string("kernel"), static_cast<long long>(i * m + j), xi(i), xi(j), v.value, v.tail});
        }
    ojson diag;
    diag["basis_scale"] = k.basis_scale;
    diag["num_modes"] = k.num_modes;
    diag["basis_converged"] = k.converged;
    diag["basis_tail"] = tail;
    diag["flagged"] = flagged;
    write_result("reduced", cfg, table, diag, out, diag_out);
    return (!k.converged || flagged) ? kNotConverged : kOk;
}

inline int cmd_shorttime(RunConfig cfg, std::ostream& out, std::ostream& diag_out) {
    if (cfg.t > cfg.t_max)
        throw ConfigError("t: " + detail::format_short(cfg.t) + " exceeds t_max = " + detail::format_short(cfg.t_max) +
                          "; the short-time expansion is not valid there");
    if (cfg.n < 2) throw ConfigError("n: the short-time expansion needs n >= 2");
    if (cfg.lambda.empty()) {
        cfg.lambda.assign(static_cast<std::size_t>(cfg.n - 1), 0.0);
        cfg.lambda.back() = 1.0;
    }
    const GroupSpec spec(cfg.n);
    const auto lam = require_lambda(cfg);
    const auto p = line_averaged(potential_coefficients(lam, spec));
    Table table;
    table.columns = {"kind", "t"};
    const auto names = coordinate_names(cfg);
    table.columns.insert(table.columns.end(), names.begin(), names.end());
    for (const char* c : {"x", "y", "expansion", "reference", "abs_diff", "rel_diff", "trunc_error"})
        table.columns.emplace_back(c);
    const std::vector<Cell> blank_coords(names.size());
    auto push = [&](const std::string& kind, double t, const std::vector<Cell>& coords, Cell x, Cell y, double e,
                    double r, double te) {
        std::vector<Cell> row{kind, t};
        row.insert(row.end(), coords.begin(), coords.end());
        row.insert(row.end(), {x, y, e, r, std::abs(e - r), std::abs(e - r) / std::abs(r), te});
        table.rows.push_back(std::move(row));
    };
    // order study of the reduced kernel on the diagonal at x = 0
    const std::vector<double> ts{cfg.t, cfg.t / 2, cfg.t / 4};
    std::vector<double> abs_d, rel_d;
    const auto v = reduced_potential(spec, lam);
    SolverConfig sc = cfg.solver;
    std::optional<SpectralKernel> sk;
    for (double t : ts) {
        double ref = 0.0, err = 0.0;
        if (cfg.n == 2) {
            ref = mehler_kernel(2.0 * std::numbers::pi * std::abs(lam.lambda[0]), t, 0.0, 0.0);
        } else {
            for (;;) {
                if (!sk) sk = spectral_solve(v, sc);
                const auto kv = kernel_eval(*sk, t, 0.0, 0.0);
                ref = kv.value;
                err = kv.tail;
                if (!kv.flagged) break;
                if (sc.num_modes >= 1024) throw std::runtime_error("reference kernel unresolved with 1024 modes");
                sc.num_modes *= 2;
                sk.reset();
            }
        }
        const double e = reduced_kernel_expansion(p, t, 0.0, 0.0);
        abs_d.push_back(std::abs(e - ref));
        rel_d.push_back(std::abs(e - ref) / ref);
        push("reduced", t, blank_coords, 0.0, 0.0, e, ref, err);
    }
    // assembled kernels at the requested points
    long long bad = 0;
    if (!cfg.points.empty() || !cfg.grid.empty()) {
        const auto pts = resolve_points(cfg);
        std::vector<GroupElement> g;
        for (const auto& q : pts) g.push_back(to_group(cfg, q));
        const auto st = heat_kernel_short_time_batch(spec, cfg.t, g, cfg.quadrature, cfg.t_max);
        const auto full = heat_kernel_batch(spec, cfg.t, g, cfg.quadrature);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (!st[i].converged || !full[i].converged) ++bad;
            push("kernel", cfg.t, std::vector<Cell>(pts[i].begin(), pts[i].end()), std::monostate{}, std::monostate{},
                 st[i].value, full[i].value, std::hypot(st[i].trunc_error, full[i].trunc_error));
        }
    }
    ojson diag;
    diag["slope_abs"] = fitted_slope(ts, abs_d);
    diag["slope_rel"] = fitted_slope(ts, rel_d);
    diag["reference"] = cfg.n == 2 ? "closed_form" : "spectral";
    diag["not_converged"] = bad;
    write_result("shorttime", cfg, table, diag, out, diag_out);
    return bad ? kNotConverged : kOk;
}

// ---------------------------------------------------------------- validate

struct SuiteResult {
    std::string suite;
    bool passed = false;
    double metric = 0.0;
    double threshold = 0.0;
    std::string detail;
};

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"group",        "homomorphism",  "mehler",     "spectral",
                                                "plancherel",   "normalization", "montecarlo", "shorttime"};
    return names;
}

namespace suites {

inline SuiteResult group() {
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(-2, 2);
    double worst = 0.0;
    for (int n = 1; n <= 5; ++n) {
        const GroupSpec spec(n);
        auto rand = [&] {
            GroupElement g{u(rng), {}};
            for (int k = 0; k < n; ++k) g.z.push_back(u(rng));
            return g;
        };
        auto diff = [](const GroupElement& x, const GroupElement& y) {
            double m = std::abs(x.a - y.a);
            for (std::size_t k = 0; k < x.z.size(); ++k) m = std::max(m, std::abs(x.z[k] - y.z[k]));
            return m;
        };
        for (int i = 0; i < 200; ++i) {
            const auto g = rand(), h = rand(), k = rand();
            worst = std::max(worst, diff(multiply(spec, multiply(spec, g, h), k), multiply(spec, g, multiply(spec, h, k))));
            worst = std::max(worst, diff(multiply(spec, g, inverse(spec, g)), identity(spec)));
            worst = std::max(worst, diff(exp_coordinates(spec, log_coordinates(spec, g)), g));
        }
    }
    return {"group", worst < 1e-10, worst, 1e-10, "associativity, inverse and exp/log on 1000 random triples, n = 1..5"};
}

inline SuiteResult homomorphism() {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> steps(-40, 40);
    std::uniform_real_distribution<double> u(-1, 1);
    const double lo = -20, hi = 20;
    const std::size_t m = 1601;
    std::vector<std::complex<double>> v(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);
        v[i] = std::exp(-0.5 * x * x);
    }
    const GridFunction f(lo, hi, v);
    double worst = 0.0;
    for (int n : {2, 3}) {
        const GroupSpec spec(n);
        for (int trial = 0; trial < 10; ++trial) {
            DualParameter lam;
            for (int i = 0; i < n - 1; ++i) lam.lambda.push_back(u(rng));
            GroupElement g{f.step() * steps(rng) + 0.37 * f.step(), {}}, k{f.step() * steps(rng) - 0.21 * f.step(), {}};
            for (int i = 0; i < n; ++i) {
                g.z.push_back(u(rng));
                k.z.push_back(u(rng));
            }
            const auto lhs = representation_apply(spec, lam, multiply(spec, g, k), f).f;
            const auto rhs = representation_apply(spec, lam, g, representation_apply(spec, lam, k, f).f).f;
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                num += std::norm(lhs.values[i] - rhs.values[i]);
                den += std::norm(rhs.values[i]);
            }
            worst = std::max(worst, std::sqrt(num / den));
        }
    }
    return {"homomorphism", worst < 1e-8, worst, 1e-8, "relative L2 of pi(gh)f - pi(g)pi(h)f, 10 trials each on n = 2, 3"};
}

inline SuiteResult mehler() {
    const double w = 2.0 * std::numbers::pi;
    const auto v = PolynomialPotential::from_coefficients({0.0, 0.0, w * w});
    double worst = 0.0;
    for (double t : {0.1, 0.25})
        for (double x0 = -2.0; x0 <= 2.0001; x0 += 1.0) {
            const auto res = crank_nicolson_oracle(v, t, x0);
            for (std::size_t i = 0; i < res.u.size(); i += 5) {
                const double y = res.u.x(i);
                if (std::abs(y) > 2.0 + 1e-9) continue;
                const double ref = mehler_kernel(w, t, x0, y);
                worst = std::max(worst, std::abs(res.u.values[i].real() - ref) / ref);
            }
        }
    return {"mehler", worst < 1e-4, worst, 1e-4, "Crank-Nicolson against the closed-form harmonic kernel, t = 0.1, 0.25"};
}

inline SuiteResult spectral() {
    const double w = 2.0 * std::numbers::pi;
    SolverConfig sc;
    sc.num_modes = 64;
    const auto h = spectral_solve(PolynomialPotential::from_coefficients({0.0, 0.0, w * w}), sc);
    double eig = 0.0;
    for (int j = 0; j < 16; ++j) eig = std::max(eig, std::abs(h.eigenvalues(j) / ((2 * j + 1) * w) - 1.0));
    sc.num_modes = 128;
    const auto k = spectral_solve(reduced_potential(GroupSpec(3), {{0.0, 1.0}}), sc);
    const double s = 0.25, t = 0.25, dz = 0.005;
    double ck = 0.0;
    for (double x : {-0.5, 0.3})
        for (double y : {-0.2, 0.8}) {
            CompensatedSum sum;
            for (double z = -5.0; z <= 5.0; z += dz) sum.add(kernel_eval(k, s, x, z).value * kernel_eval(k, t, z, y).value * dz);
            ck = std::max(ck, std::abs(sum.value() - kernel_eval(k, s + t, x, y).value));
        }
    const bool ok = eig < 1e-6 && ck < 1e-6;
    return {"spectral", ok, std::max(eig, ck), 1e-6,
            "harmonic eigenvalue relative error " + detail::format_double(eig) + ", quartic semigroup residual " +
                detail::format_double(ck)};
}

inline SuiteResult plancherel(const RunConfig& cfg) {
    if (cfg.n != 2 && cfg.n != 3) return {"plancherel", false, 0.0, 0.02, "needs n = 2 or 3"};
    const GroupSpec spec(cfg.n);
    auto prof = cfg.n == 2 ? gaussian_profile(2, 0.24, 0.6, 24) : gaussian_profile(3, 0.25, 1.0, 20);
    prof.cfg.c_P = cfg.quadrature.c_P;
    const auto [lhs, rhs] = plancherel_check(spec, prof.f, prof.box, prof.cfg);
    const double rel = std::abs(rhs / lhs - 1.0);
    return {"plancherel", rel < 0.02, rel, 0.02, "Gaussian test function with c_P = " + detail::format_double(prof.cfg.c_P)};
}

inline SuiteResult normalization_suite(const RunConfig& cfg) {
    const GroupSpec spec(cfg.n);
    const double tol = cfg.n <= 2 ? 1e-2 : 2e-2;
    const auto r = normalization(spec, cfg.t, cfg.quadrature);
    const double dev = std::abs(r.value - 1.0);
    return {"normalization", dev < tol, dev, tol,
            "integral " + detail::format_double(r.value) + " at t = " + detail::format_double(cfg.t)};
}

/// Offsets in units of the coordinate spreads; five points including the identity.
inline std::vector<GroupElement> montecarlo_points(const GroupSpec& spec, double t) {
    const std::vector<std::vector<double>> f{
        {0.0, 0.0, 0.0, 0.0}, {0.4, 0.2, 0.0, 0.0}, {-0.3, 0.0, 0.3, 0.0}, {0.2, -0.3, -0.2, 0.1}, {0.0, 0.3, 0.1, -0.1}};
    std::vector<GroupElement> out;
    for (const auto& r : f) {
        GroupElement g{r[0] * std::sqrt(2.0 * t), {}};
        for (int k = 1; k <= spec.n; ++k)
            g.z.push_back((k < 4 ? r[static_cast<std::size_t>(k)] : 0.0) * std::sqrt(coordinate_variance(k, t)));
        out.push_back(std::move(g));
    }
    return out;
}

inline SuiteResult montecarlo(const RunConfig& cfg) {
    const GroupSpec spec(cfg.n);
    auto sde = cfg.sde;
    sde.t = cfg.t;
    const auto d = simulate_paths(spec, sde);
    std::vector<double> a;
    for (const auto& g : d.samples()) a.push_back(g.a);
    const auto ks = ks_test_normal(a, std::sqrt(2.0 * cfg.t));
    const auto pts = montecarlo_points(spec, cfg.t);
    const auto kernel = heat_kernel_smoothed(spec, cfg.t, pts, d.bandwidth(), cfg.quadrature);
    const auto rep = compare_density(d, pts, kernel);
    const bool ok = ks.p_value > 0.01 && rep.max_abs_z < 3.0;
    return {"montecarlo", ok, rep.max_abs_z, 3.0,
            "max |z| over 5 points; KS p-value of a " + detail::format_double(ks.p_value)};
}

inline SuiteResult shorttime() {
    const std::vector<double> ts{0.02, 0.01, 0.005};
    const double w = 2.0 * std::numbers::pi;
    const auto ph = line_averaged(potential_coefficients({{1.0}}, GroupSpec(2)));
    const GroupSpec s3(3);
    const DualParameter lam{{0.0, 1.0}};
    const auto pq = line_averaged(potential_coefficients(lam, s3));
    SolverConfig sc;
    sc.num_modes = 768;
    const auto k = spectral_solve(reduced_potential(s3, lam), sc);
    std::vector<double> eh, eq;
    bool flagged = false;
    for (double t : ts) {
        const double m = mehler_kernel(w, t, 0.0, 0.0);
        eh.push_back(std::abs(reduced_kernel_expansion(ph, t, 0.0, 0.0) - m) / m);
        const auto r = kernel_eval(k, t, 0.0, 0.0);
        flagged = flagged || r.flagged;
        eq.push_back(std::abs(reduced_kernel_expansion(pq, t, 0.0, 0.0) - r.value));
    }
    const double sh = fitted_slope(ts, eh), sq = fitted_slope(ts, eq);
    const bool ok = !flagged && sh >= 1.7 && sh <= 2.3 && sq >= 1.4;
    return {"shorttime", ok, sh, 2.0,
            "harmonic relative-error slope " + detail::format_double(sh) + ", quartic error slope " +
                detail::format_double(sq)};
}

}  // namespace suites

inline SuiteResult run_suite(const std::string& name, const RunConfig& cfg) {
    if (name == "group") return suites::group();
    if (name == "homomorphism") return suites::homomorphism();
    if (name == "mehler") return suites::mehler();
    if (name == "spectral") return suites::spectral();
    if (name == "plancherel") return suites::plancherel(cfg);
    if (name == "normalization") return suites::normalization_suite(cfg);
    if (name == "montecarlo") return suites::montecarlo(cfg);
    if (name == "shorttime") return suites::shorttime();
    throw ConfigError("suite: unknown suite '" + name + "'");
}

inline int cmd_validate(RunConfig cfg, std::ostream& out, std::ostream& diag_out) {
    std::vector<std::string> names;
    if (cfg.suite == "all") {
        names = suite_names();
    } else {
        std::stringstream ss(cfg.suite);
        std::string s;
        while (std::getline(ss, s, ',')) {
            if (std::find(suite_names().begin(), suite_names().end(), s) == suite_names().end())
                throw ConfigError("suite: unknown suite '" + s + "'");
            names.push_back(s);
        }
    }
    ojson diag;
    diag["c_P_source"] = cfg.c_P_auto ? "auto" : "config";
    if (cfg.c_P_auto) cfg.quadrature.c_P = auto_calibrate(cfg, diag);
    Table table;
    table.columns = {"suite", "passed", "metric", "threshold", "detail"};
    long long failed = 0;
    for (const auto& name : names) {
        const auto r = run_suite(name, cfg);
        if (!r.passed) ++failed;
        table.rows.push_back({r.suite, r.passed, r.metric, r.threshold, r.detail});
    }
    diag["c_P"] = cfg.quadrature.c_P;
    diag["failed"] = failed;
    write_result("validate", cfg, table, diag, out, diag_out);
    return failed ? kValidationFailure : kOk;
}

// ---------------------------------------------------------------- entry point

/// Runs the command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"nilheat: heat kernels of sub-Laplacians on filiform nilpotent groups"};
    app.require_subcommand(1);
    struct Flags {
        int n = 0;
        double t = 0.0;
        std::vector<std::string> points;
        std::string grid, lambda, config, format, suite, out, coordinates;
        std::uint64_t seed = 0;
    } fl;
    std::vector<std::pair<std::string, CLI::App*>> subs;
    const std::vector<std::pair<std::string, std::string>> descr{
        {"kernel", "evaluate p_t at group points"},
        {"reduced", "eigenvalues and kernel of the reduced Schroedinger operator for one dual parameter"},
        {"shorttime", "short-time expansion against the full kernel"},
        {"validate", "run the built-in validation suites"}};
    struct Opts {
        CLI::Option *n, *t, *point, *grid, *lambda, *config, *format, *seed, *suite, *out, *coordinates;
    };
    std::vector<Opts> opts;
    for (const auto& [name, d] : descr) {
        auto* s = app.add_subcommand(name, d);
        Opts o{};
        o.n = s->add_option("--n", fl.n, "group parameter: G_{n+1} has dimension n + 1");
        o.t = s->add_option("--t", fl.t, "time");
        o.point = s->add_option("--point", fl.points, "comma-separated coordinates; repeatable (use --point=-1,0,0)");
        o.grid = s->add_option("--grid", fl.grid, "axes name=lo:hi:count, comma-separated");
        o.lambda = s->add_option("--lambda", fl.lambda, "dual parameter lambda_1..lambda_{n-1}, comma-separated");
        o.config = s->add_option("--config", fl.config, "JSON config file");
        o.format = s->add_option("--format", fl.format, "csv or json");
        o.seed = s->add_option("--seed", fl.seed, "Monte Carlo seed");
        o.suite = s->add_option("--suite", fl.suite, "validation suites, comma-separated, or all");
        o.out = s->add_option("--out", fl.out, "output file instead of stdout");
        o.coordinates = s->add_option("--coordinates", fl.coordinates, "group or exponential");
        subs.emplace_back(name, s);
        opts.push_back(o);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }
    std::size_t which = 0;
    while (!subs[which].second->parsed()) ++which;
    const std::string command = subs[which].first;
    const Opts& o = opts[which];
    try {
        RunConfig cfg = o.config->count() ? load_config_file(fl.config) : RunConfig{};
        if (o.n->count()) cfg.n = fl.n;
        if (o.t->count()) cfg.t = fl.t;
        if (o.coordinates->count()) cfg.coordinates = detail::parse_coordinates(fl.coordinates);
        if (o.point->count()) {
            cfg.points.clear();
            for (const auto& p : fl.points) cfg.points.push_back(detail::parse_list(p, "point"));
        }
        if (o.grid->count()) cfg.grid = detail::parse_grid(fl.grid);
        if (o.lambda->count()) cfg.lambda = detail::parse_list(fl.lambda, "lambda");
        if (o.format->count()) cfg.format = detail::parse_format(fl.format);
        if (o.seed->count()) cfg.sde.seed = fl.seed;
        if (o.suite->count()) cfg.suite = fl.suite;
        if (o.out->count()) cfg.out = fl.out;
        validate_config(cfg);
        if (command == "kernel") return cmd_kernel(cfg, out, err);
        if (command == "reduced") return cmd_reduced(cfg, out, err);
        if (command == "shorttime") return cmd_shorttime(cfg, out, err);
        return cmd_validate(cfg, out, err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kNotConverged;
    }
}

}  // namespace nilheat::cli
