#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cmalab/functionals.hpp"
#include "cmalab/mu.hpp"
#include "cmalab/radial_domain.hpp"

namespace cmalab {

/// Right-hand side f(s, t, x) of mu(MA(u)) - u_t = f, with |f| <= K1 + K2|u| and
/// |f_t| + |f_u| + |grad f| <= K3. `density`, when present, is b with f = mu(b).
/// Bounds that are not known stay NaN.
struct Forcing {
    using Fn = std::function<double(double, double, double)>;
    std::string name;
    Fn f, f_dx, density;
    double K1 = std::numeric_limits<double>::quiet_NaN();
    double K2 = std::numeric_limits<double>::quiet_NaN();
    double K3 = std::numeric_limits<double>::quiet_NaN();
};

/// f = mu(psi^n(s, x)); psi^n must be positive (perturb it first).
Forcing forcing_from_nonlinearity(const Nonlinearity& nl, const MuFunction& mu);
/// f = mu((lambda (-x))^n + kappa). kappa = 0 is the exact eigen forcing (singular at x = 0 for log).
Forcing eigen_forcing(int n, double lambda, const MuFunction& mu, double kappa);
/// f = c.
Forcing constant_forcing(double c);

/// max |df/dx| over x in [-M0, 0], sampled at every grid node.
double forcing_lipschitz(const Forcing& f, const RadialGrid& g, double M0, int samples = 2001);

struct FlowConfig {
    MuFunction mu;
    Forcing forcing;
    double dt_init = 1e-3;
    double dt_max = 1.0;
    double t_end = 1.0;
    double cfl_safety = 0.5;
    double psh_floor = 1e-6;
    double steady_tol = 1e-7;
    double newton_tol = 1e-11;
    long max_steps = 200000;
    std::optional<Nonlinearity> energy;  // J is monitored against this nonlinearity when set
};

struct FlowDiagnostics {
    double t = 0.0, dt = 0.0;
    double J = 0.0;             // NaN without cfg.energy
    double sup_ut = 0.0;
    double ma_min = 0.0, ma_max = 0.0;  // over the equation nodes 0..N-2
    double u_min = 0.0;
    double M = 1.0;             // ||u||_{C^0} + 1
    int newton_iterations = 0;
    bool projected = false;     // psh_project changed the iterate
    double dissipation = 0.0;   // int (mu(a) - mu(b))(a - b), a = MA(new), b = mu^{-1}(f)
    double dissipation_min = 0.0;   // termwise minimum of (mu(a) - mu(b))(a - b)
    double slope_chain_min = 0.0;   // termwise min of (mu(a)-mu(b))(a-b) - (a^{1/p}-b^{1/p})(a-b)
};

struct FlowState {
    double t = 0.0;
    double dt = 0.0;   // step size to try next
    RadialFn v;
    FlowDiagnostics diag;
    std::vector<FlowDiagnostics> history;
    long rejected = 0;
    bool steady = false;
};

FlowState make_flow_state(const FlowConfig& cfg, const RadialFn& v0);

/// g = (1 - chi) ma_rad(v_raw) + chi mu^{-1}(f(., 0, 0)), chi = 0 for s <= 1 - 2 delta and 1 for
/// s >= 1 - delta, then the exact discrete inverse.
RadialFn prepare_initial(const RadialFn& v_raw, const Forcing& f, const MuFunction& mu, double blend_delta);

/// |mu(MA(1)) - f(1, 0, 0)|, with MA(1) extrapolated (cubic) from the last four equation nodes.
double compatibility_residual(const RadialFn& v, const Forcing& f, const MuFunction& mu);

/// One accepted step (retrying with halved dt on Newton failure or a too-large update):
///   mu(MA(v_new)) - (v_new - v_old)/dt = f(s, t, v_old),  then psh_project with floor psh_floor e^{-t}.
/// Throws NumericalError when dt drops below 1e-12. `dt_cap` limits this step only.
void step(FlowState& state, const FlowConfig& cfg, double dt_cap = 0.0);

/// Integrate to cfg.t_end or steady state (sup|u_t| <= steady_tol).
FlowState run(const FlowConfig& cfg, const RadialFn& v0);

/// Advance an existing state to time t_target (or steady state); returns false if max_steps hit.
bool advance_to(FlowState& state, const FlowConfig& cfg, double t_target);

struct StabilityReport {
    double K = 0.0, T = 0.0;
    double initial_gap = 0.0;
    double sup_gap = 0.0;
    double bound = 0.0;       // e^{KT} ||a - b||
    double slack = 0.0;       // 100 h^2
    long steps = 0;
    bool holds() const { return sup_gap <= bound + slack; }
};

/// Both trajectories use the same step schedule. K = max |df/dx| over [-M0, 0], M0 from the
/// uniform bound.
StabilityReport stability_pair(const FlowConfig& cfg, const RadialFn& a, const RadialFn& b, double T);

struct MonitorReport {
    double ut_over_M = 0.0;
    double ma_min = 0.0;
    double ma_over_Mp = 0.0;
    bool finite = false;
};

MonitorReport monitors(const FlowState& state, const FlowConfig& cfg);

/// Lower bound from the uniform estimate: -(||u0|| + K1/K2) e^{K2 t} for K2 > 0, otherwise
/// -||u0|| - A with mu(A^n) = K1. -inf when the forcing carries no bounds.
double uniform_lower_bound(const FlowConfig& cfg, int n, double u0_norm, double t);

void write_trajectory_csv(const std::string& path, const FlowState& state, const std::string& header_comment = "");

}  // namespace cmalab
