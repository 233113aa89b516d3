// Command-line front end: staticgeo <command> [--config FILE] [--key value ...]
//
// Flags mirror the configuration keys and override values from the file.

#include "staticgeo/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

int main(int argc, char** argv) {
    using nlohmann::json;
    CLI::App app{"Numerical toolkit for standard static spacetimes"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* app;
        std::string config_file;
        std::map<std::string, std::string> values;
    };
    std::map<std::string, Sub> subs;
    const std::map<std::string, std::string> about{
        {"catalog", "list catalog spacetimes"},
        {"integrate", "integrate a geodesic from initial data"},
        {"connect", "connect two events by minimizing the action J"},
        {"shoot", "connect two events by a shooting sweep"},
        {"growth", "growth exponent of beta or 1/beta"},
        {"probe", "completeness probe for g, g_R or g_S*"},
        {"arrival", "earliest causal arrival time at a slice point"},
        {"reduce", "integrate a geodesic and reduce it to a classical trajectory"},
        {"lift", "lift a classical trajectory to a normalized geodesic"},
    };
    for (const auto& cmd : staticgeo::experiment_commands()) {
        Sub& s = subs[cmd];
        s.app = app.add_subcommand(cmd, about.at(cmd));
        s.app->add_option("--config", s.config_file, "JSON configuration file");
        auto add = [&](const staticgeo::ConfigKey& k) {
            if (k.name == "command") return;
            s.app->add_option("--" + k.name, s.values[k.name], k.help)->allow_extra_args(false);
        };
        for (const auto& k : staticgeo::common_keys()) add(k);
        for (const auto& k : staticgeo::command_keys(cmd)) add(k);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : staticgeo::exit_validation;
    }

    for (auto& [cmd, s] : subs) {
        if (!s.app->parsed()) continue;
        json cfg = json::object();
        if (!s.config_file.empty()) {
            std::ifstream f(s.config_file);
            if (!f) {
                std::cerr << "cli.config: cannot read " << s.config_file << "\n";
                return staticgeo::exit_validation;
            }
            try {
                f >> cfg;
            } catch (const std::exception& e) {
                std::cerr << "cli.config: " << s.config_file << ": " << e.what() << "\n";
                return staticgeo::exit_validation;
            }
            if (cfg.contains("command") && cfg["command"] != cmd) {
                std::cerr << "cli.config: file is for command " << cfg["command"].dump() << ", not " << cmd << "\n";
                return staticgeo::exit_validation;
            }
        }
        cfg["command"] = cmd;
        for (const auto& [key, value] : s.values)
            if (s.app->get_option("--" + key)->count() > 0) cfg[key] = value;

        const auto bundle = staticgeo::run_experiment(cfg);
        std::cout << bundle.report_text();
        if (bundle.report.contains("error"))
            std::cerr << bundle.report["error"]["message"].get<std::string>() << "\n";
        if (bundle.report.contains("config") && bundle.report["config"].contains("out")) {
            try {
                staticgeo::write_bundle(bundle, bundle.report["config"]["out"].get<std::string>());
            } catch (const staticgeo::Error& e) {
                std::cerr << e.what() << "\n";
                return staticgeo::exit_validation;
            }
        }
        return bundle.exit_code;
    }
    return staticgeo::exit_validation;
}
