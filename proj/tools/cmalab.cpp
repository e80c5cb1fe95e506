#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmalab/app.hpp"
#include "cmalab/config.hpp"
#include "cmalab/error.hpp"

using namespace cmalab;

namespace {

struct Overrides {
    std::string config_path;
    std::vector<std::string> set;
    std::string n, grid, tol, mu_p, out, seed;
    bool serial = false;
};

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config_path, "flat key = value config file");
    sub->add_option("--n", o.n, "complex dimension");
    sub->add_option("--grid", o.grid, "number of radial nodes N");
    sub->add_option("--tol", o.tol, "solver tolerance");
    sub->add_option("--mu-p", o.mu_p, "mu exponent p, or inf for the logarithm");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "seed for randomized checks");
    sub->add_flag("--serial", o.serial, "deterministic single-threaded execution (always the case)");
    sub->add_option("--set", o.set, "extra key=value override, repeatable");
}

RunConfig resolve(const Overrides& o, Subcommand cmd) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    cfg.subcommand = cmd;
    auto apply = [&](const char* key, const std::string& v) {
        if (!v.empty()) set_config_value(cfg, key, v);
    };
    apply("n", o.n);
    apply("N", o.grid);
    apply("tol", o.tol);
    apply("mu_p", o.mu_p);
    apply("output", o.out);
    apply("seed", o.seed);
    if (o.serial) cfg.serial = true;
    for (const auto& kv : o.set) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (cfg.dt > cfg.dt_max) throw ConfigError("dt: must not exceed dt_max");
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Radial complex Monge-Ampere lab"};
    app.require_subcommand(1);
    Overrides o;
    const std::vector<std::pair<Subcommand, std::string>> cmds{
        {Subcommand::eigen, "first eigenpair (inverse iteration and Rayleigh descent)"},
        {Subcommand::solve, "invert MA(u) = g for a built-in density"},
        {Subcommand::flow, "run the mu-flow with the estimate monitors"},
        {Subcommand::sublinear, "sublinear minimizing driver"},
        {Subcommand::superlinear, "superlinear mountain-pass driver"},
        {Subcommand::verify, "property suite"}};
    std::vector<std::pair<CLI::App*, Subcommand>> subs;
    for (const auto& [cmd, help] : cmds) {
        CLI::App* sub = app.add_subcommand(to_string(cmd), help);
        add_common(sub, o);
        subs.emplace_back(sub, cmd);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    Subcommand cmd = Subcommand::verify;
    for (const auto& [sub, c] : subs)
        if (sub->parsed()) cmd = c;

    try {
        RunConfig cfg = resolve(o, cmd);
        return run_command(cfg, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvalidArgument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure [stage " << e.stage() << "]: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ConeViolation& e) {
        std::cerr << "numerical failure [stage cone]: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure [stage unknown]: " << e.what() << '\n';
        return kExitNumerical;
    }
}
