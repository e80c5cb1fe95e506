#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cmalab/config.hpp"
#include "cmalab/flow.hpp"
#include "cmalab/functionals.hpp"
#include "cmalab/radial_domain.hpp"

namespace cmalab {

/// Exit codes of the command-line tool.
enum ExitCode { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

/// Nonlinearity named by cfg.nonlinearity. "table" reads a CSV `x,value` of psi^n(x) (x <= 0),
/// interpolated linearly and extended linearly below the last sample.
Nonlinearity nonlinearity_from_config(const RunConfig& cfg, double lambda1);
Nonlinearity read_table_nonlinearity(const std::string& path, int n);

MuFunction mu_from_config(const RunConfig& cfg);
std::vector<double> density_from_config(const RunConfig& cfg, const RadialGrid& g);

/// Flow run with the per-step checks of the uniform estimate: u <= 0, u(1) = 0 exactly, and
/// min u >= lower bound - 10 h^2 whenever the forcing carries K1, K2.
struct FlowOutcome {
    FlowConfig flow;
    RadialFn v0;
    FlowState state;
    MonitorReport monitor;
    double lambda1 = 0.0;
    double compatibility = 0.0;
    double max_u = 0.0;             // over all accepted steps
    double max_boundary = 0.0;      // max |u(1)| over all accepted steps
    double bound_margin = 0.0;      // min over steps of u_min - (lower bound - 10 h^2); +inf without bounds
    double ma_min = 0.0;            // min over steps
    bool bound_checked = false;
    bool ok() const;
};

FlowOutcome run_flow_config(const RunConfig& cfg);

/// Runs cfg.subcommand, writes its output files into cfg.output and a JSON summary to `out`.
/// Returns the exit code; configuration and numerical errors propagate as exceptions.
int run_command(const RunConfig& cfg, std::ostream& out);

/// The `# `-prefixed provenance block written at the top of every CSV: hash line, then the config.
std::string provenance_comment(const RunConfig& cfg);

}  // namespace cmalab
