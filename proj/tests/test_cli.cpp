#include "staticgeo/experiment.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

using namespace staticgeo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("staticgeo_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd = std::string(STATICGEO_CLI) + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, UnknownKeyRejected) {
    const auto b = run_experiment(json{{"command", "connect"}, {"spacetime", "minkowski"}, {"p0", "0,0"},
                                       {"p1", "2,1"}, {"speed", 3}});
    EXPECT_EQ(b.exit_code, exit_validation);
    EXPECT_NE(b.report["error"]["message"].get<std::string>().find("speed"), std::string::npos);
}

TEST(Config, KeyOfAnotherCommandRejected) {
    const auto b = run_experiment(json{{"command", "growth"}, {"spacetime", "quad_beta"}, {"p0", "0,0"}});
    EXPECT_EQ(b.exit_code, exit_validation);
}

TEST(Config, TolerancesMustBePositive) {
    for (const char* key : {"tol", "grad_tol", "residual_tol"}) {
        const auto b = run_experiment(json{{"command", "connect"}, {"spacetime", "minkowski"}, {"p0", "0,0"},
                                           {"p1", "2,1"}, {key, 0.0}});
        EXPECT_EQ(b.exit_code, exit_validation) << key;
    }
}

TEST(Config, MalformedValues) {
    EXPECT_EQ(run_experiment(json{{"command", "connect"}, {"spacetime", "minkowski"}, {"p0", "0,x"}, {"p1", "2,1"}})
                  .exit_code,
              exit_validation);
    EXPECT_EQ(run_experiment(json{{"command", "connect"}, {"spacetime", "minkowski"}, {"p0", "0,0,0"}, {"p1", "2,1"}})
                  .exit_code,
              exit_validation);
    EXPECT_EQ(run_experiment(json{{"command", "fly"}}).exit_code, exit_validation);
    EXPECT_EQ(run_experiment(json{{"spacetime", "minkowski"}}).exit_code, exit_validation);
    EXPECT_EQ(run_experiment(json{{"command", "probe"}, {"spacetime", "nowhere"}}).exit_code, exit_validation);
}

TEST(Config, FlagStringsAndJsonValuesAreEquivalent) {
    const auto a = validate_config(json{{"command", "connect"}, {"spacetime", "minkowski"}, {"p0", "0,0"},
                                        {"p1", "2,1"}, {"segments", "64"}});
    const auto b = validate_config(json{{"command", "connect"}, {"spacetime", "minkowski"}, {"p0", {0, 0}},
                                        {"p1", {2.0, 1.0}}, {"segments", 64}});
    EXPECT_EQ(io::dump(a), io::dump(b));
    EXPECT_EQ(config_hash(a), config_hash(b));
    json c = b;
    c["out"] = "/somewhere";
    EXPECT_EQ(config_hash(validate_config(c)), config_hash(b));
}

TEST(Run, ConnectMinkowski) {
    const auto b =
        run_experiment(json{{"command", "connect"}, {"spacetime", "minkowski"}, {"p0", "0,0"}, {"p1", "2,1"}});
    EXPECT_EQ(b.exit_code, exit_ok);
    EXPECT_EQ(b.report["result"]["status"], "geodesic");
    EXPECT_EQ(b.report["result"]["character"], "timelike");
    ASSERT_EQ(b.artifacts.size(), 1u);
    EXPECT_EQ(b.artifacts[0].content.substr(0, b.artifacts[0].content.find('\n')),
              "s,t,x0,tdot,xdot0,lambda,C,auxnorm");
}

TEST(Run, ArrivalSlitPlane) {
    const auto b = run_experiment(
        json{{"command", "arrival"}, {"spacetime", "slit_plane"}, {"p", "0,0,0"}, {"target", "2,2"}});
    EXPECT_EQ(b.exit_code, exit_ok);
    EXPECT_NEAR(b.report["result"]["infimum_t"].get<double>(), std::sqrt(8.0), 1e-3);
    EXPECT_FALSE(b.report["result"]["attained"].get<bool>());
}

TEST(Run, AntiDeSitterDivergenceExitCode) {
    const auto b =
        run_experiment(json{{"command", "connect"}, {"spacetime", "ads_strip"}, {"p0", "0,0"}, {"p1", "3,0.3"}});
    EXPECT_EQ(b.exit_code, exit_divergence);
    EXPECT_EQ(b.report["result"]["status"], "diverged");
}

TEST(Run, StiffnessExitCode) {
    const auto b = run_experiment(
        json{{"command", "integrate"}, {"spacetime", "schwarzschild_exterior"}, {"x", "4"}, {"v", "1,-1"}});
    EXPECT_EQ(b.exit_code, exit_numerical);
    EXPECT_EQ(b.report["error"]["kind"], "stiffness");
    EXPECT_EQ(b.report["error"]["module"], "spacetime");
    EXPECT_EQ(b.report["error"]["operation"], "integrate_geodesic");
}

TEST(Run, OutOfDomainIsValidation) {
    const auto b = run_experiment(
        json{{"command", "integrate"}, {"spacetime", "schwarzschild_exterior"}, {"x", "1"}, {"v", "1,0"}});
    EXPECT_EQ(b.exit_code, exit_validation);
}

TEST(Run, NotReducibleIsValidation) {
    const auto b =
        run_experiment(json{{"command", "reduce"}, {"spacetime", "quad_beta"}, {"x", "0.5"}, {"v", "0,1"}});
    EXPECT_EQ(b.exit_code, exit_validation);
    EXPECT_EQ(b.report["error"]["kind"], "not_reducible");
}

TEST(Run, ReduceThenLiftThroughFiles) {
    const auto dir = scratch("reduce_lift");
    auto r = run_experiment(json{{"command", "reduce"}, {"spacetime", "quad_beta"}, {"x", "-1"}, {"v", "1,2"},
                                 {"out", dir.string()}});
    ASSERT_EQ(r.exit_code, exit_ok);
    write_bundle(r, dir.string());
    EXPECT_LT(r.report["result"]["max_residual"].get<double>(), 1e-6);
    EXPECT_LT(r.report["result"]["jacobi_residual"].get<double>(), 1e-5);
    const auto l = run_experiment(json{{"command", "lift"}, {"spacetime", "quad_beta"},
                                       {"input", (dir / "classical.csv").string()}});
    ASSERT_EQ(l.exit_code, exit_ok);
    EXPECT_LT(l.report["result"]["residual"].get<double>(), 1e-6);
    EXPECT_NEAR(l.report["result"]["trajectory"]["lambda0"].get<double>(), std::sqrt(2.0), 1e-12);
}

TEST(Run, ManifestListsArtifacts) {
    const auto dir = scratch("manifest");
    const auto b = run_experiment(json{{"command", "growth"}, {"spacetime", "quad_beta"}, {"out", dir.string()}});
    ASSERT_EQ(b.exit_code, exit_ok);
    write_bundle(b, dir.string());
    const auto m = json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(m["config_hash"], b.report["config_hash"]);
    std::vector<std::string> files = m["artifacts"];
    EXPECT_EQ(files, (std::vector<std::string>{"report.json", "growth.csv"}));
    for (const auto& f : files) EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(slurp(dir / "report.json"), b.report_text());
    EXPECT_EQ(slurp(dir / "growth.csv").substr(0, 4), "d,f\n");
}

TEST(Determinism, IdenticalConfigGivesIdenticalBytes) {
    const json cfgs[] = {
        {{"command", "probe"}, {"spacetime", "unit_disk"}, {"n_samples", 20}, {"seed", 5}},
        {{"command", "connect"}, {"spacetime", "quad_beta"}, {"p0", "0,-1"}, {"p1", "2,1"}, {"seed", 9}},
        {{"command", "growth"}, {"spacetime", "superquad_beta"}},
    };
    for (const auto& c : cfgs) {
        const auto a = run_experiment(c);
        const auto b = run_experiment(c);
        EXPECT_EQ(a.report_text(), b.report_text());
        ASSERT_EQ(a.artifacts.size(), b.artifacts.size());
        for (std::size_t i = 0; i < a.artifacts.size(); ++i) EXPECT_EQ(a.artifacts[i].content, b.artifacts[i].content);
    }
}

TEST(Determinism, ThreadCountDoesNotChangeProbe) {
    const json c{{"command", "probe"}, {"spacetime", "inv_beta_superquad"}, {"n_samples", 16}, {"seed", 3}};
    setenv("STATICGEO_THREADS", "1", 1);
    const auto a = run_experiment(c).report_text();
    setenv("STATICGEO_THREADS", "4", 1);
    const auto b = run_experiment(c).report_text();
    unsetenv("STATICGEO_THREADS");
    EXPECT_EQ(a, b);
}

TEST(Determinism, SeedChangesProbeSamples) {
    const json a{{"command", "probe"}, {"spacetime", "unit_disk"}, {"n_samples", 4}, {"seed", 1}};
    json b = a;
    b["seed"] = 2;
    EXPECT_NE(run_experiment(a).report["result"]["witness"], run_experiment(b).report["result"]["witness"]);
}

TEST(RoundTrip, TrajectoryCsv) {
    const auto st = make_spacetime("quad_beta", CatalogParams{2});
    Vec x(2), v(2);
    x << 0.3, -0.7;
    v << 1.1, 0.2;
    const auto tr = integrate_geodesic(st, GeodesicState{0.5, x, 0.9, v}, 5.0);
    const std::string csv = io::trajectory_csv(st, tr);
    const auto back = io::read_trajectory_csv(csv);
    ASSERT_EQ(back.samples.size(), tr.samples.size());
    for (std::size_t i = 0; i < tr.samples.size(); ++i) {
        EXPECT_EQ(back.samples[i].s, tr.samples[i].s);
        EXPECT_EQ(back.samples[i].state.t, tr.samples[i].state.t);
        EXPECT_EQ(back.samples[i].state.x, tr.samples[i].state.x);
        EXPECT_EQ(back.samples[i].state.t_dot, tr.samples[i].state.t_dot);
        EXPECT_EQ(back.samples[i].state.x_dot, tr.samples[i].state.x_dot);
    }
    EXPECT_EQ(io::trajectory_csv(st, back), csv);
}

TEST(RoundTrip, ClassicalCsv) {
    const auto st = make_spacetime("quad_beta");
    const auto tr = integrate_geodesic(st, GeodesicState{0, Vec::Constant(1, 0.2), 1.3, Vec::Constant(1, 0.4)}, 3.0);
    const auto red = reduce_to_classical(st, tr);
    const std::string csv = io::classical_csv(red.trajectory);
    const auto back = io::read_classical_csv(csv);
    ASSERT_EQ(back.samples.size(), red.trajectory.samples.size());
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
        EXPECT_EQ(back.samples[i].s, red.trajectory.samples[i].s);
        EXPECT_EQ(back.samples[i].x, red.trajectory.samples[i].x);
        EXPECT_EQ(back.samples[i].v, red.trajectory.samples[i].v);
        EXPECT_EQ(back.samples[i].a, red.trajectory.samples[i].a);
    }
}

TEST(RoundTrip, JsonNumbersAtSeventeenDigits) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    json a = json::array();
    for (int i = 0; i < 200; ++i) a.push_back(u(rng) * std::pow(10.0, i % 40 - 20));
    const auto back = json::parse(io::dump(json{{"v", a}}));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(back["v"][i].get<double>(), a[i].get<double>());
}

TEST(RoundTrip, NonFiniteAsStrings) {
    const auto text = io::dump(json{{"a", std::numeric_limits<double>::infinity()}});
    EXPECT_NE(text.find("\"inf\""), std::string::npos);
    EXPECT_NO_THROW(json::parse(text));
}

TEST(Binary, ConnectExitCodeAndOutput) {
    const auto dir = scratch("bin_connect");
    EXPECT_EQ(run_cli("connect --spacetime minkowski --p0 0,0 --p1 2,1 --out " + dir.string(), dir / "stdout"), 0);
    const auto rep = json::parse(slurp(dir / "stdout"));
    EXPECT_EQ(rep["result"]["status"], "geodesic");
    EXPECT_EQ(slurp(dir / "report.json"), slurp(dir / "stdout"));
    EXPECT_TRUE(fs::exists(dir / "curve.csv"));
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(Binary, FlagsOverrideConfigFile) {
    const auto dir = scratch("bin_override");
    {
        std::ofstream f(dir / "cfg.json");
        f << R"({"command": "arrival", "spacetime": "slit_plane", "p": [0, 0, 0], "target": [2, 0]})";
    }
    EXPECT_EQ(run_cli("arrival --config " + (dir / "cfg.json").string() + " --target 2,2", dir / "stdout"), 0);
    const auto rep = json::parse(slurp(dir / "stdout"));
    EXPECT_EQ(rep["config"]["target"], json::array({2.0, 2.0}));
    EXPECT_FALSE(rep["result"]["attained"].get<bool>());
}

TEST(Binary, ExitCodes) {
    const auto dir = scratch("bin_codes");
    EXPECT_EQ(run_cli("connect --spacetime minkowski --p0 0,0 --p1 2,1 --tol -1", dir / "o"), 2);
    EXPECT_EQ(run_cli("connect --spacetime minkowski --p0 0,0 --p1 2,1 --warp 9", dir / "o"), 2);
    {
        std::ofstream f(dir / "bad.json");
        f << R"({"spacetime": "minkowski", "p0": [0, 0], "p1": [2, 1], "colour": "red"})";
    }
    EXPECT_EQ(run_cli("connect --config " + (dir / "bad.json").string(), dir / "o"), 2);
    EXPECT_EQ(run_cli("integrate --spacetime schwarzschild_exterior --x 4 --v 1,-1", dir / "o"), 3);
    EXPECT_EQ(run_cli("connect --spacetime ads_strip --p0 0,0 --p1 3,0.3", dir / "o"), 4);
    EXPECT_EQ(run_cli("catalog", dir / "o"), 0);
}
