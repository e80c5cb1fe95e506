#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmalab/radial_domain.hpp"

namespace cmalab {

enum class Subcommand { eigen, solve, flow, sublinear, superlinear, verify };

std::string to_string(Subcommand s);

/// Every run is described by one flat `key = value` file; see README for the key list.
struct RunConfig {
    Subcommand subcommand = Subcommand::verify;
    int n = 1;
    int N = 1024;
    Clustering clustering = Clustering::uniform;

    double mu_p = 0.0;        // 0 means p = inf (log)
    double mu_eps = 1e-2;
    double mu_fault = 0.0;    // bump amplitude injected into phi (fault-injection runs only)

    std::string nonlinearity = "eigen";  // eigen | sublinear | superlinear | table
    std::string table_file;              // CSV x,value of psi^n for nonlinearity = table

    // eigen
    double tol = 1e-10;
    int max_iter = 200;
    std::string method = "both";         // inverse | descent | both

    // solve
    std::string density = "one";         // one | one_plus_s | two_plus_sin3s

    // flow
    std::string forcing = "eigen";       // eigen | nonlinearity | constant
    double forcing_kappa = 1.0;
    double forcing_constant = 0.0;
    double forcing_eps = 1e-2;           // added to psi^n for forcing = nonlinearity
    std::string initial = "eigen";       // eigen | linear
    double initial_scale = 1.0;
    double dt = 1e-3;
    double dt_max = 1.0;
    double t_end = 1.0;
    double cfl_safety = 0.5;
    double psh_floor = 1e-6;
    double steady_tol = 1e-7;
    double blend_delta = 0.05;
    bool monitors = true;

    // drivers
    double solver_tol = 0.0;             // 0 selects the driver default
    std::vector<double> m_levels{4.0, 8.0};
    std::vector<double> eps_levels{1e-2, 1e-4, 1e-6, 1e-8};
    int m_path = 17;
    int seed_path = 0;
    std::vector<double> delta_levels{1e-1, 1e-2, 1e-3};
    std::vector<double> a_fractions{0.1, 0.01, 0.001};

    std::string output = "out";
    std::uint64_t seed = 1;
    bool serial = true;
};

/// Parses the flat format: one `key = value` per line, `#` starts a comment, blank lines are
/// ignored. Unknown keys, malformed lines and out-of-range values throw ConfigError carrying the
/// line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Re-applies one `key = value` pair (used for command-line overrides). Throws ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value, int line = 0);

/// The fully resolved config in the same flat format, keys in a fixed order.
std::string config_to_text(const RunConfig& cfg);

/// 64-bit FNV-1a of the given bytes, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace cmalab
