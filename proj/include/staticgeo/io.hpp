#pragma once

// Report serialization: JSON with 17 significant digits, trajectory and curve
// CSV files, and the config hash used in run manifests.

#include "staticgeo/connectedness.hpp"
#include "staticgeo/diagnostics.hpp"
#include "staticgeo/error.hpp"
#include "staticgeo/spacetime.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace staticgeo::io {

using nlohmann::json;

inline std::string num(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline void dump(const json& j, int indent, int depth, std::string& out) {
    const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
    const std::string close(static_cast<std::size_t>(indent * depth), ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad + json(it.key()).dump() + ": ";
                dump(it.value(), indent, depth + 1, out);
            }
            out += "\n" + close + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            // numeric arrays stay on one line
            bool flat = true;
            for (const auto& e : j) flat = flat && e.is_primitive();
            out += flat ? "[" : "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += flat ? ", " : ",\n";
                if (!flat) out += pad;
                dump(j[i], indent, depth + 1, out);
            }
            out += flat ? "]" : "\n" + close + "]";
            return;
        }
        case json::value_t::number_float: {
            const double v = j.get<double>();
            // JSON has no inf/nan; they are written as strings
            out += std::isfinite(v) ? num(v) : "\"" + num(v) + "\"";
            return;
        }
        default:
            out += j.dump();
    }
}

}  // namespace detail

/// Deterministic text form: keys sorted (nlohmann objects are ordered maps),
/// floats with 17 significant digits.
inline std::string dump(const json& j, int indent = 2) {
    std::string out;
    detail::dump(j, indent, 0, out);
    return out;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline json vec_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cli", "write", "cannot open " + path);
    f << text;
}

// ---------------------------------------------------------------------------
// Trajectory CSV: s,t,x0..x{n-1},tdot,xdot0..,lambda,C,auxnorm
// ---------------------------------------------------------------------------

inline std::string trajectory_header(int n) {
    std::string h = "s,t";
    for (int i = 0; i < n; ++i) h += ",x" + std::to_string(i);
    h += ",tdot";
    for (int i = 0; i < n; ++i) h += ",xdot" + std::to_string(i);
    return h + ",lambda,C,auxnorm";
}

inline std::string trajectory_row(const StaticSpacetime& st, double s, const GeodesicState& g) {
    std::string r = num(s) + "," + num(g.t);
    for (Eigen::Index i = 0; i < g.x.size(); ++i) r += "," + num(g.x[i]);
    r += "," + num(g.t_dot);
    for (Eigen::Index i = 0; i < g.x_dot.size(); ++i) r += "," + num(g.x_dot[i]);
    r += "," + num(conserved_lambda(st, g)) + "," + num(conserved_norm(st, g)) + "," + num(aux_norm_sq(st, g));
    return r;
}

inline std::string trajectory_csv(const StaticSpacetime& st, const GeodesicTrajectory& tr) {
    std::string out = trajectory_header(tr.dim()) + "\n";
    for (const auto& smp : tr.samples) out += trajectory_row(st, smp.s, smp.state) + "\n";
    return out;
}

/// Parse a trajectory CSV. Derivatives are not stored, so the result carries
/// samples, lambda0 and C0 (from the first row) and the drift of the stored columns.
inline GeodesicTrajectory read_trajectory_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("cli", "read_trajectory_csv", "empty file");
    int cols = 1;
    for (char c : line) cols += c == ',';
    const int n = (cols - 6) / 2;
    if (n < 1 || cols != 2 * n + 6 || line != trajectory_header(n))
        throw ValidationError("cli", "read_trajectory_csv", "unexpected header: " + line);
    GeodesicTrajectory tr;
    double l0 = 0, c0 = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                v.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ValidationError("cli", "read_trajectory_csv", "bad number: " + cell);
            }
        }
        if (static_cast<int>(v.size()) != cols) throw ValidationError("cli", "read_trajectory_csv", "bad row: " + line);
        GeodesicState g;
        g.t = v[1];
        g.x = Eigen::Map<const Vec>(v.data() + 2, n);
        g.t_dot = v[static_cast<std::size_t>(2 + n)];
        g.x_dot = Eigen::Map<const Vec>(v.data() + 3 + n, n);
        const double lam = v[static_cast<std::size_t>(3 + 2 * n)], c = v[static_cast<std::size_t>(4 + 2 * n)];
        if (tr.samples.empty()) {
            l0 = lam;
            c0 = c;
        }
        tr.drift.lambda = std::max(tr.drift.lambda, std::abs(lam - l0));
        tr.drift.norm = std::max(tr.drift.norm, std::abs(c - c0));
        tr.samples.push_back({v[0], g});
    }
    if (tr.samples.empty()) throw ValidationError("cli", "read_trajectory_csv", "no rows");
    tr.lambda0 = l0;
    tr.C0 = c0;
    tr.s_exit = tr.samples.back().s;
    return tr;
}

/// Connection curve in trajectory format. A lifted geodesic is sampled on the
/// curve grid; otherwise the discrete nodes get t from the time
/// reconstruction, t' = lambda / beta and x' by differences.
inline std::string connection_csv(const StaticSpacetime& st, const Vec& p0, const Vec& p1, const ConnectResult& r) {
    const int n = st.dim();
    std::string out = trajectory_header(n) + "\n";
    const int segs = r.curve.segments();
    if (r.trajectory) {
        const auto nodes = r.trajectory->nodes();
        for (int i = 0; i <= segs; ++i) {
            const double s = static_cast<double>(i) / segs;
            out += trajectory_row(st, s, GeodesicState::unpack(ode::dense_eval(nodes, s))) + "\n";
        }
        return out;
    }
    const double dt = p1[0] - p0[0];
    const auto tr = reconstruct_time(st, r.curve, dt, p0[0]);
    const double h = r.curve.step();
    for (int i = 0; i <= segs; ++i) {
        GeodesicState g;
        g.t = tr.t[static_cast<std::size_t>(i)];
        g.x = r.curve.node(i);
        g.t_dot = tr.lambda / st.beta_at(g.x);
        const int a = std::max(0, i - 1), b = std::min(segs, i + 1);
        g.x_dot = (r.curve.node(b) - r.curve.node(a)) / (h * (b - a));
        out += trajectory_row(st, static_cast<double>(i) / segs, g) + "\n";
    }
    return out;
}

inline std::string classical_csv(const ClassicalTrajectory& c) {
    const auto n = c.samples.empty() ? 0 : c.samples.front().x.size();
    std::string out = "s";
    for (Eigen::Index i = 0; i < n; ++i) out += ",x" + std::to_string(i);
    for (Eigen::Index i = 0; i < n; ++i) out += ",v" + std::to_string(i);
    for (Eigen::Index i = 0; i < n; ++i) out += ",a" + std::to_string(i);
    out += "\n";
    for (const auto& smp : c.samples) {
        out += num(smp.s);
        for (const Vec* v : {&smp.x, &smp.v, &smp.a})
            for (Eigen::Index i = 0; i < n; ++i) out += "," + num((*v)[i]);
        out += "\n";
    }
    return out;
}

/// Inverse of classical_csv. E and orientation are not stored.
inline ClassicalTrajectory read_classical_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("cli", "read_classical_csv", "empty file");
    int cols = 1;
    for (char c : line) cols += c == ',';
    const int n = (cols - 1) / 3;
    if (n < 1 || cols != 3 * n + 1 || line.rfind("s,x0", 0) != 0)
        throw ValidationError("cli", "read_classical_csv", "unexpected header: " + line);
    ClassicalTrajectory cl;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                v.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ValidationError("cli", "read_classical_csv", "bad number: " + cell);
            }
        }
        if (static_cast<int>(v.size()) != cols) throw ValidationError("cli", "read_classical_csv", "bad row: " + line);
        cl.samples.push_back({v[0], Eigen::Map<const Vec>(v.data() + 1, n), Eigen::Map<const Vec>(v.data() + 1 + n, n),
                              Eigen::Map<const Vec>(v.data() + 1 + 2 * n, n)});
    }
    if (cl.samples.empty()) throw ValidationError("cli", "read_classical_csv", "no rows");
    return cl;
}

inline std::string growth_csv(const GrowthReport& g) {
    std::string out = "d,f\n";
    for (std::size_t i = 0; i < g.radii.size(); ++i) out += num(g.radii[i]) + "," + num(g.max_values[i]) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Report objects
// ---------------------------------------------------------------------------

inline json trajectory_summary(const GeodesicTrajectory& tr) {
    return json{{"lambda0", tr.lambda0},
                {"C0", tr.C0},
                {"drift_lambda", tr.drift.lambda},
                {"drift_C", tr.drift.norm},
                {"termination", to_string(tr.termination)},
                {"s_exit", tr.s_exit},
                {"samples", tr.samples.size()}};
}

inline json connect_json(const ConnectResult& r) {
    json h = json::array();
    for (const auto& e : r.history) h.push_back(json::array({e.iteration, e.J, e.max_node_norm}));
    return json{{"status", to_string(r.status)},
                {"lambda", r.lambda},
                {"J", r.J_value},
                {"residual", r.residual},
                {"character", to_string(r.character)},
                {"iterations", r.iterations},
                {"min_clearance", r.min_clearance},
                {"discretization_gap", r.discretization_gap},
                {"seed_index", r.seed_index},
                {"note", r.note},
                {"history", h}};
}

inline json shoot_json(const ShootResult& r) {
    return json{{"reached", r.reached},     {"verdict", r.verdict},   {"miss", r.miss},
                {"sweep_miss", r.sweep_miss}, {"lambda", r.lambda},     {"C", r.C},
                {"character", to_string(r.character)}, {"residual", r.residual}, {"directions", r.directions},
                {"velocity", r.velocity.size() ? vec_json(r.velocity) : json::array()}};
}

inline json growth_json(const GrowthReport& g) {
    return json{{"which", to_string(g.which)},
                {"exponent", g.exponent},
                {"classification", to_string(g.classification)},
                {"fit_residual", g.fit_residual},
                {"amplitude", g.amplitude},
                {"base_point", vec_json(g.base_point)},
                {"radii", g.radii},
                {"max_values", g.max_values},
                {"warnings", g.warnings}};
}

inline json probe_json(const ProbeReport& p) {
    json j{{"verdict", to_string(p.verdict)},
           {"metric", to_string(p.metric_probed)},
           {"n_samples", p.n_samples},
           {"s_max", p.s_max},
           {"witnesses", p.witnesses},
           {"failures", p.failures},
           {"witness_sample", p.witness_sample}};
    if (p.witness) j["witness"] = trajectory_summary(*p.witness);
    return j;
}

inline json arrival_json(const ArrivalResult& a) {
    return json{{"infimum_t", a.infimum_t}, {"attained", a.attained}, {"distance", a.distance}};
}

}  // namespace staticgeo::io
