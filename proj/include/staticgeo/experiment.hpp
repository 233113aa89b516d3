#pragma once

// One experiment from a JSON configuration: validation, dispatch, report and
// artifacts. The command-line tool is a thin layer over run_experiment.

#include "staticgeo/catalog.hpp"
#include "staticgeo/connectedness.hpp"
#include "staticgeo/diagnostics.hpp"
#include "staticgeo/error.hpp"
#include "staticgeo/io.hpp"
#include "staticgeo/spacetime.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace staticgeo {

enum class KeyKind { text, number, integer, vector };

struct ConfigKey {
    std::string name;
    KeyKind kind;
    std::string help;
};

/// Exit codes of run_experiment and the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_validation = 2, exit_numerical = 3, exit_divergence = 4 };

inline const std::vector<std::string>& experiment_commands() {
    static const std::vector<std::string> c{"catalog", "integrate", "connect", "shoot", "growth",
                                            "probe",   "arrival",   "reduce",  "lift"};
    return c;
}

/// Keys every command accepts.
inline const std::vector<ConfigKey>& common_keys() {
    static const std::vector<ConfigKey> k{
        {"command", KeyKind::text, "subcommand"},
        {"spacetime", KeyKind::text, "catalog entry name"},
        {"dim", KeyKind::integer, "slice dimension for variable-dimension entries"},
        {"m", KeyKind::number, "mass parameter (schwarzschild_exterior)"},
        {"eps", KeyKind::number, "exponent offset (superquadratic families)"},
        {"seed", KeyKind::integer, "seed for randomized components"},
        {"out", KeyKind::text, "output directory"},
    };
    return k;
}

inline const std::vector<ConfigKey>& command_keys(const std::string& cmd) {
    static const std::vector<ConfigKey> none;
    static const std::vector<ConfigKey> integrate{
        {"x", KeyKind::vector, "initial slice point"},
        {"v", KeyKind::vector, "initial velocity (t', x')"},
        {"t0", KeyKind::number, "initial time"},
        {"s_max", KeyKind::number, "affine parameter range"},
        {"tol", KeyKind::number, "integrator tolerance"},
        {"blowup_threshold", KeyKind::number, "auxiliary norm treated as blow-up"},
    };
    static const std::vector<ConfigKey> connect{
        {"p0", KeyKind::vector, "start event (t, x)"},
        {"p1", KeyKind::vector, "end event (t, x)"},
        {"segments", KeyKind::integer, "curve segments"},
        {"n_seeds", KeyKind::integer, "perturbed seed curves besides the chord"},
        {"max_iter", KeyKind::integer, "minimizer iteration cap"},
        {"grad_tol", KeyKind::number, "gradient tolerance"},
        {"residual_tol", KeyKind::number, "geodesic residual accepted as converged"},
        {"J_floor", KeyKind::number, "action value treated as unbounded below"},
        {"tol", KeyKind::number, "integrator tolerance of the lift"},
    };
    static const std::vector<ConfigKey> shoot{
        {"p0", KeyKind::vector, "start event (t, x)"},
        {"p1", KeyKind::vector, "end event (t, x)"},
        {"angle_res", KeyKind::number, "direction grid spacing"},
        {"ray_tol", KeyKind::number, "integrator tolerance of the sweep"},
        {"s_ray_max", KeyKind::number, "affine range of each ray"},
        {"tol", KeyKind::number, "integrator tolerance of the polish"},
    };
    static const std::vector<ConfigKey> growth{
        {"which", KeyKind::text, "beta or inv_beta"},
        {"base", KeyKind::vector, "base point"},
        {"r0", KeyKind::number, "smallest radius"},
        {"r1", KeyKind::number, "largest radius"},
        {"count", KeyKind::integer, "number of radii"},
        {"n_rays", KeyKind::integer, "ray directions in a 2-d slice"},
        {"tol", KeyKind::number, "integrator tolerance"},
    };
    static const std::vector<ConfigKey> probe{
        {"metric", KeyKind::text, "g, g_R or g_S_star"},
        {"n_samples", KeyKind::integer, "random geodesics"},
        {"s_max", KeyKind::number, "affine parameter range"},
        {"tol", KeyKind::number, "integrator tolerance"},
        {"blowup_threshold", KeyKind::number, "norm treated as blow-up"},
        {"box_lo", KeyKind::vector, "sampling box lower corner"},
        {"box_hi", KeyKind::vector, "sampling box upper corner"},
    };
    static const std::vector<ConfigKey> arrival{
        {"p", KeyKind::vector, "source event (t, x)"},
        {"target", KeyKind::vector, "target slice point"},
        {"segments", KeyKind::integer, "curve segments"},
        {"violation_tol", KeyKind::number, "accepted constraint violation"},
    };
    static const std::vector<ConfigKey> reduce{
        {"x", KeyKind::vector, "initial slice point"},
        {"v", KeyKind::vector, "initial velocity (t', x')"},
        {"t0", KeyKind::number, "initial time"},
        {"s_max", KeyKind::number, "affine parameter range"},
        {"tol", KeyKind::number, "integrator tolerance"},
        {"jacobi_floor", KeyKind::number, "minimum E - V for the Jacobi check"},
    };
    static const std::vector<ConfigKey> lift{
        {"input", KeyKind::text, "classical trajectory CSV"},
        {"orientation", KeyKind::integer, "sign of lambda (+1 or -1)"},
        {"t0", KeyKind::number, "initial time"},
    };
    if (cmd == "integrate") return integrate;
    if (cmd == "connect") return connect;
    if (cmd == "shoot") return shoot;
    if (cmd == "growth") return growth;
    if (cmd == "probe") return probe;
    if (cmd == "arrival") return arrival;
    if (cmd == "reduce") return reduce;
    if (cmd == "lift") return lift;
    return none;
}

/// Keys whose values must be strictly positive.
inline bool is_tolerance_key(const std::string& k) {
    return k == "tol" || k == "grad_tol" || k == "residual_tol" || k == "ray_tol" || k == "angle_res" ||
           k == "violation_tol" || k == "jacobi_floor";
}

namespace detail {

inline const ConfigKey* find_key(const std::string& cmd, const std::string& name) {
    for (const auto& k : common_keys())
        if (k.name == name) return &k;
    for (const auto& k : command_keys(cmd))
        if (k.name == name) return &k;
    return nullptr;
}

inline std::vector<double> parse_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || cell.find_first_not_of(" \t", used) != std::string::npos)
            throw ValidationError("cli", "config", "key '" + key + "': bad number '" + cell + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ValidationError("cli", "config", "key '" + key + "': empty list");
    return out;
}

inline nlohmann::json normalize_value(const ConfigKey& k, const nlohmann::json& v) {
    using nlohmann::json;
    const auto bad = [&](const std::string& want) {
        return ValidationError("cli", "config", "key '" + k.name + "' expects " + want + ", got " + v.dump());
    };
    switch (k.kind) {
        case KeyKind::text:
            if (!v.is_string()) throw bad("a string");
            return v;
        case KeyKind::number:
            if (v.is_number()) return json(v.get<double>());
            if (v.is_string()) {
                const auto l = parse_list(v.get<std::string>(), k.name);
                if (l.size() == 1) return json(l[0]);
            }
            throw bad("a number");
        case KeyKind::integer:
            if (v.is_number_integer()) return v;
            if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()))
                return json(static_cast<long long>(v.get<double>()));
            if (v.is_string()) {
                try {
                    std::size_t used = 0;
                    const long long i = std::stoll(v.get<std::string>(), &used);
                    if (used == v.get<std::string>().size()) return json(i);
                } catch (const std::exception&) {
                }
            }
            throw bad("an integer");
        case KeyKind::vector: {
            std::vector<double> l;
            if (v.is_string()) {
                l = parse_list(v.get<std::string>(), k.name);
            } else if (v.is_array()) {
                for (const auto& e : v) {
                    if (!e.is_number()) throw bad("a list of numbers");
                    l.push_back(e.get<double>());
                }
            } else if (v.is_number()) {
                l.push_back(v.get<double>());
            } else {
                throw bad("a list of numbers");
            }
            json a = json::array();
            for (double d : l) a.push_back(d);
            return a;
        }
    }
    throw bad("a value");
}

}  // namespace detail

/// Check keys and types, convert flag strings to typed values. The result is
/// the canonical configuration (hashed into the manifest).
inline nlohmann::json validate_config(const nlohmann::json& raw) {
    using nlohmann::json;
    if (!raw.is_object()) throw ValidationError("cli", "config", "configuration must be a JSON object");
    if (!raw.contains("command") || !raw["command"].is_string())
        throw ValidationError("cli", "config", "missing 'command'");
    const std::string cmd = raw["command"].get<std::string>();
    const auto& cmds = experiment_commands();
    if (std::find(cmds.begin(), cmds.end(), cmd) == cmds.end())
        throw ValidationError("cli", "config", "unknown command '" + cmd + "'");
    json out = json::object();
    for (auto it = raw.begin(); it != raw.end(); ++it) {
        const ConfigKey* k = detail::find_key(cmd, it.key());
        if (!k) throw ValidationError("cli", "config", "unknown key '" + it.key() + "' for command " + cmd);
        json v = detail::normalize_value(*k, it.value());
        if (is_tolerance_key(k->name) && !(v.get<double>() > 0))
            throw ValidationError("cli", "config", "tolerance '" + k->name + "' must be > 0");
        if (k->name == "seed" && v.get<long long>() < 0)
            throw ValidationError("cli", "config", "seed must be non-negative");
        out[it.key()] = std::move(v);
    }
    if (cmd != "catalog" && cmd != "lift" && !out.contains("spacetime"))
        throw ValidationError("cli", "config", "command " + cmd + " needs 'spacetime'");
    if (cmd == "lift" && (!out.contains("spacetime") || !out.contains("input")))
        throw ValidationError("cli", "config", "command lift needs 'spacetime' and 'input'");
    return out;
}

/// Hash of the canonical configuration without the output directory.
inline std::string config_hash(const nlohmann::json& canonical) {
    nlohmann::json c = canonical;
    c.erase("out");
    return io::hex64(io::fnv1a(io::dump(c, 0)));
}

struct Artifact {
    std::string name;
    std::string content;
};

struct ReportBundle {
    int exit_code = exit_ok;
    nlohmann::json report;
    std::vector<Artifact> artifacts;  // CSV files; report.json and manifest.json are added on write

    std::string report_text() const { return io::dump(report) + "\n"; }
};

namespace detail {

inline Vec get_vec(const nlohmann::json& c, const std::string& key, int size, const char* what) {
    if (!c.contains(key)) throw ValidationError("cli", "config", "missing '" + key + "'");
    const auto l = c[key].get<std::vector<double>>();
    if (static_cast<int>(l.size()) != size)
        throw ValidationError("cli", "config",
                              "'" + key + "' must have " + std::to_string(size) + " components (" + what + ")");
    return Eigen::Map<const Vec>(l.data(), size);
}

template <class T>
T get_or(const nlohmann::json& c, const std::string& key, T def) {
    return c.contains(key) ? c[key].get<T>() : def;
}

inline StaticSpacetime build_spacetime(const nlohmann::json& c, CatalogParams& p) {
    p.dim = get_or<int>(c, "dim", 0);
    p.m = get_or<double>(c, "m", p.m);
    p.eps = get_or<double>(c, "eps", p.eps);
    const auto cat = catalog_list();
    const auto& e = catalog_entry(cat, c["spacetime"].get<std::string>());
    p.dim = resolve_dim(e, p);
    return make_spacetime(e.name, p);
}

inline nlohmann::json catalog_json(const CatalogEntry& e) {
    return nlohmann::json{{"name", e.name},
                          {"description", e.description},
                          {"provenance", e.provenance},
                          {"default_dim", e.default_dim},
                          {"variable_dim", e.variable_dim}};
}

inline void run_command(const nlohmann::json& c, ReportBundle& b) {
    using nlohmann::json;
    const std::string cmd = c["command"].get<std::string>();
    json& r = b.report["result"];
    const std::uint64_t seed = get_or<std::uint64_t>(c, "seed", 1);

    if (cmd == "catalog") {
        const auto cat = catalog_list();
        if (c.contains("spacetime")) {
            r = catalog_json(catalog_entry(cat, c["spacetime"].get<std::string>()));
        } else {
            r = json::array();
            for (const auto& e : cat) r.push_back(catalog_json(e));
        }
        return;
    }

    CatalogParams params;
    const StaticSpacetime st = build_spacetime(c, params);
    const int n = st.dim();
    r["spacetime"] = c["spacetime"];
    r["dim"] = n;

    if (cmd == "integrate" || cmd == "reduce") {
        const Vec x = get_vec(c, "x", n, "slice point");
        const Vec v = get_vec(c, "v", n + 1, "t' followed by x'");
        IntegrateOptions io;
        io.tol = get_or<double>(c, "tol", io.tol);
        io.blowup_threshold = get_or<double>(c, "blowup_threshold", io.blowup_threshold);
        const double s_max = get_or<double>(c, "s_max", cmd == "integrate" ? 100.0 : 10.0);
        if (!(s_max > 0)) throw ValidationError("cli", "config", "s_max must be positive");
        const GeodesicState init{get_or<double>(c, "t0", 0.0), x, v[0], v.tail(n)};
        const auto tr = integrate_geodesic(st, init, s_max, io);
        r["trajectory"] = io::trajectory_summary(tr);
        r["character"] = to_string(causal_character(st, init));
        if (cmd == "integrate") {
            b.artifacts.push_back({"trajectory.csv", io::trajectory_csv(st, tr)});
            return;
        }
        const auto red = reduce_to_classical(st, tr);
        r["E"] = red.trajectory.E;
        r["orientation"] = red.trajectory.orientation;
        r["max_residual"] = red.report.max_residual;
        r["energy_drift"] = red.report.energy_drift;
        try {
            r["jacobi_residual"] = jacobi_check(st, red.trajectory, get_or<double>(c, "jacobi_floor", 1e-3));
        } catch (const NearTurningPointError& e) {
            r["jacobi_residual"] = nullptr;
            r["jacobi_note"] = e.what();
        }
        b.artifacts.push_back({"classical.csv", io::classical_csv(red.trajectory)});
        return;
    }

    if (cmd == "lift") {
        std::ifstream f(c["input"].get<std::string>(), std::ios::binary);
        if (!f) throw ValidationError("cli", "lift", "cannot read " + c["input"].get<std::string>());
        std::stringstream ss;
        ss << f.rdbuf();
        ClassicalTrajectory cl = io::read_classical_csv(ss.str());
        if (cl.samples.front().x.size() != n)
            throw ValidationError("cli", "lift", "trajectory dimension does not match the spacetime");
        const int orient = get_or<int>(c, "orientation", 1);
        if (orient != 1 && orient != -1) throw ValidationError("cli", "config", "orientation must be +1 or -1");
        cl.orientation = orient;
        cl.E = classical_energy(st, cl.samples.front().x, cl.samples.front().v);
        const auto lr = lift_classical(st, cl, get_or<double>(c, "t0", 0.0));
        r["residual"] = lr.residual;
        r["trajectory"] = io::trajectory_summary(lr.trajectory);
        b.artifacts.push_back({"trajectory.csv", io::trajectory_csv(st, lr.trajectory)});
        return;
    }

    if (cmd == "connect") {
        const Vec p0 = get_vec(c, "p0", n + 1, "t followed by x");
        const Vec p1 = get_vec(c, "p1", n + 1, "t followed by x");
        ConnectOptions o;
        o.seed = seed;
        o.segments = get_or<int>(c, "segments", o.segments);
        o.n_seeds = get_or<int>(c, "n_seeds", o.n_seeds);
        o.max_iter = get_or<int>(c, "max_iter", o.max_iter);
        o.grad_tol = get_or<double>(c, "grad_tol", o.grad_tol);
        o.residual_tol = get_or<double>(c, "residual_tol", o.residual_tol);
        o.J_floor = get_or<double>(c, "J_floor", o.J_floor);
        o.polish.tol = get_or<double>(c, "tol", o.polish.tol);
        const auto res = minimize_action(st, p0, p1, o);
        r.update(io::connect_json(res));
        b.artifacts.push_back({"curve.csv", io::connection_csv(st, p0, p1, res)});
        if (res.status == ConnectStatus::diverged) b.exit_code = exit_divergence;
        if (res.status == ConnectStatus::max_iter) b.exit_code = exit_numerical;
        return;
    }

    if (cmd == "shoot") {
        const Vec p0 = get_vec(c, "p0", n + 1, "t followed by x");
        const Vec p1 = get_vec(c, "p1", n + 1, "t followed by x");
        ShootOptions o;
        o.angle_res = get_or<double>(c, "angle_res", o.angle_res);
        if (c.contains("angle_res")) o.angle_res_2d = o.angle_res;
        o.ray_tol = get_or<double>(c, "ray_tol", o.ray_tol);
        o.s_ray_max = get_or<double>(c, "s_ray_max", o.s_ray_max);
        o.polish.tol = get_or<double>(c, "tol", o.polish.tol);
        const auto res = shooting_connect(st, p0, p1, o);
        r.update(io::shoot_json(res));
        if (res.trajectory) b.artifacts.push_back({"trajectory.csv", io::trajectory_csv(st, *res.trajectory)});
        if (!res.reached) b.exit_code = exit_divergence;
        return;
    }

    if (cmd == "growth") {
        const std::string which = get_or<std::string>(c, "which", "beta");
        if (which != "beta" && which != "inv_beta")
            throw ValidationError("cli", "config", "'which' must be beta or inv_beta");
        const auto cat = catalog_list();
        const Vec base = c.contains("base") ? get_vec(c, "base", n, "slice point")
                                            : catalog_entry(cat, c["spacetime"].get<std::string>()).base_point(n, params);
        GrowthOptions o;
        o.n_rays = get_or<int>(c, "n_rays", o.n_rays);
        o.tol = get_or<double>(c, "tol", o.tol);
        const auto radii = geometric_radii(get_or<double>(c, "r0", 1.0), get_or<double>(c, "r1", 1000.0),
                                           get_or<int>(c, "count", 12));
        const auto g = growth_exponent(st, which == "beta" ? GrowthTarget::beta : GrowthTarget::inv_beta, base,
                                       radii, o);
        r.update(io::growth_json(g));
        b.artifacts.push_back({"growth.csv", io::growth_csv(g)});
        return;
    }

    if (cmd == "probe") {
        const std::string m = get_or<std::string>(c, "metric", "g");
        ProbeMetric metric;
        if (m == "g") metric = ProbeMetric::g;
        else if (m == "g_R") metric = ProbeMetric::g_R;
        else if (m == "g_S_star") metric = ProbeMetric::g_S_star;
        else throw ValidationError("cli", "config", "'metric' must be g, g_R or g_S_star");
        ProbeOptions o;
        o.seed = seed;
        o.n_samples = get_or<int>(c, "n_samples", o.n_samples);
        o.s_max = get_or<double>(c, "s_max", o.s_max);
        o.tol = get_or<double>(c, "tol", o.tol);
        o.blowup_threshold = get_or<double>(c, "blowup_threshold", o.blowup_threshold);
        const auto cat = catalog_list();
        const auto box = catalog_entry(cat, c["spacetime"].get<std::string>()).sample_box(n, params);
        o.box_lo = c.contains("box_lo") ? get_vec(c, "box_lo", n, "corner") : box.first;
        o.box_hi = c.contains("box_hi") ? get_vec(c, "box_hi", n, "corner") : box.second;
        const auto p = completeness_probe(st, metric, o);
        r.update(io::probe_json(p));
        if (p.witness) b.artifacts.push_back({"witness.csv", io::trajectory_csv(st, *p.witness)});
        return;
    }

    if (cmd == "arrival") {
        const Vec p = get_vec(c, "p", n + 1, "t followed by x");
        const Vec target = get_vec(c, "target", n, "slice point");
        DistanceOptions o;
        o.seed = seed;
        o.segments = get_or<int>(c, "segments", o.segments);
        o.violation_tol = get_or<double>(c, "violation_tol", o.violation_tol);
        const auto a = causal_arrival(st, p, target, o);
        r.update(io::arrival_json(a));
        if (a.curve) {
            std::string csv = "i";
            for (int k = 0; k < n; ++k) csv += ",x" + std::to_string(k);
            csv += "\n";
            for (int i = 0; i <= a.curve->segments(); ++i) {
                csv += std::to_string(i);
                const Vec x = a.curve->node(i);
                for (int k = 0; k < n; ++k) csv += "," + io::num(x[k]);
                csv += "\n";
            }
            b.artifacts.push_back({"curve.csv", csv});
        }
        return;
    }
}

inline nlohmann::json error_json(const char* kind, const std::exception& e) {
    nlohmann::json j{{"kind", kind}, {"message", e.what()}};
    if (const auto* se = dynamic_cast<const Error*>(&e)) {
        j["module"] = se->module();
        j["operation"] = se->operation();
    }
    return j;
}

}  // namespace detail

/// Validate, dispatch and collect the report. Never throws for library
/// failures: they are mapped to exit codes and an "error" entry.
inline ReportBundle run_experiment(const nlohmann::json& raw_config) {
    ReportBundle b;
    nlohmann::json c;
    try {
        c = validate_config(raw_config);
    } catch (const ValidationError& e) {
        b.exit_code = exit_validation;
        b.report["error"] = detail::error_json("validation", e);
        b.report["exit_code"] = b.exit_code;
        return b;
    }
    b.report["command"] = c["command"];
    b.report["config"] = c;
    b.report["config_hash"] = config_hash(c);
    try {
        detail::run_command(c, b);
    } catch (const ValidationError& e) {
        b.exit_code = exit_validation;
        b.report["error"] = detail::error_json("validation", e);
    } catch (const OutOfDomainError& e) {
        b.exit_code = exit_validation;
        b.report["error"] = detail::error_json("out_of_domain", e);
    } catch (const NotReducibleError& e) {
        b.exit_code = exit_validation;
        b.report["error"] = detail::error_json("not_reducible", e);
    } catch (const UnreachableError& e) {
        b.exit_code = exit_divergence;
        b.report["error"] = detail::error_json("unreachable", e);
    } catch (const StiffnessError& e) {
        b.exit_code = exit_numerical;
        b.report["error"] = detail::error_json("stiffness", e);
    } catch (const SeedFailureError& e) {
        b.exit_code = exit_numerical;
        b.report["error"] = detail::error_json("seed_failure", e);
    } catch (const Error& e) {
        b.exit_code = exit_numerical;
        b.report["error"] = detail::error_json("numerical", e);
    }
    if (b.report.contains("error")) b.artifacts.clear();
    b.report["exit_code"] = b.exit_code;
    return b;
}

/// Write report.json, the artifacts and manifest.json into dir.
inline void write_bundle(const ReportBundle& b, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cli", "write", "cannot create " + dir + ": " + ec.message());
    nlohmann::json manifest;
    manifest["command"] = b.report.value("command", nlohmann::json(nullptr));
    manifest["config_hash"] = b.report.value("config_hash", nlohmann::json(nullptr));
    manifest["exit_code"] = b.exit_code;
    nlohmann::json files = nlohmann::json::array();
    io::write_text((fs::path(dir) / "report.json").string(), b.report_text());
    files.push_back("report.json");
    for (const auto& a : b.artifacts) {
        io::write_text((fs::path(dir) / a.name).string(), a.content);
        files.push_back(a.name);
    }
    manifest["artifacts"] = files;
    io::write_text((fs::path(dir) / "manifest.json").string(), io::dump(manifest) + "\n");
}

}  // namespace staticgeo
