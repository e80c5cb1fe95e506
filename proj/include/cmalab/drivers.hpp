#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cmalab/flow.hpp"
#include "cmalab/functionals.hpp"
#include "cmalab/radial_domain.hpp"

namespace cmalab {

/// Named sampled checks on a nonlinearity.
struct ValidationReport {
    bool ok = true;
    std::vector<std::pair<std::string, double>> values;
    std::vector<std::pair<std::string, bool>> checks;
    double X_big = 0.0;   // sublinear: ratio psi/|x| stays below lambda1 from here on
    double M_emp = 0.0;   // superlinear: growth conditions hold for x <= -M_emp
    double X_star = 0.0;  // superlinear: psi/|x| exceeds lambda1 from here on
    void check(const std::string& name, bool pass);
    std::string to_json() const;
};

/// psi = 2 lambda1 |x| / (1 + |x|).
Nonlinearity make_sublinear_test(double lambda1, int n = 1);
ValidationReport validate_sublinear(const Nonlinearity& nl, double lambda1);

/// psi = (lambda1 / 2)(|x| + x^2), theta = n / (2n + 2), sigma = n.
Nonlinearity make_superlinear_test(double lambda1, int n = 1);
/// Throws InvalidArgument when a growth condition fails.
ValidationReport validate_superlinear(const Nonlinearity& nl, double lambda1);

/// psi_m = psi(-y(|x|)) with y(r) = r for r <= m, r - (r - m)^2 / (2m) on [m, 2m] and 3m/2 beyond,
/// so psi_m = psi for |x| <= m and is independent of x for |x| >= 2m.
Nonlinearity truncate_bounded(const Nonlinearity& nl, double m);

struct TruncationParams {
    double m = 0.0;
    double B = 0.0;        // sup psi^n(., -m)
    double delta_m = 0.0;  // 1 / (B + 1)
    double K_m = 0.0;      // (B + 1) m^{1 - p}
    double delta = 0.0;
    int p_trunc = 0;
    bool active = false;   // false when psi / |x|^{p/n} -> 0 already
};

/// Chooses the smallest integer p > n + 1 with (n + 1)/p < theta/2 and decides whether the
/// polynomial truncation is needed by sampling psi / |x|^{p/n} on [-1e4, -m].
TruncationParams truncation_params(const Nonlinearity& nl, double m, double delta);

/// psi_m^n: psi^n for |x| <= m, K_m |x|^{p-1} for |x| >= m + delta_m, a C^1 cubic in between.
/// Returns nl unchanged when the truncation is inactive.
Nonlinearity truncate_polynomial(const Nonlinearity& nl, const TruncationParams& tp);

/// Radial cutoff: 0 within distance delta of the sphere (1 - sqrt(s) <= delta), 1 beyond 2 delta.
double eta_delta(double s, double delta);

/// eta_delta psi^n + delta^2.
Nonlinearity boundary_perturbed(const Nonlinearity& nl, double delta);

struct NewtonResult {
    RadialFn u;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton on ma_raw(u) = psi^n(s, u) at the equation nodes.
NewtonResult newton_polish(const RadialFn& v0, const Nonlinearity& nl, double tol = 1e-11, int max_iter = 60);

/// Psh sample: exact discrete inverse of a positive random density (a constant plus up to three
/// Gaussian bumps), rescaled to a sup norm drawn log-uniformly from [lo, hi].
RadialFn random_psh(const GridPtr& g, std::mt19937_64& rng, double lo = 0.05, double hi = 5.0);

struct StageRecord {
    std::string id;
    double m = 0.0, eps = 0.0;
    double t = 0.0;
    long steps = 0;
    long rejected = 0;
    bool steady = false;
    double J = 0.0;
    double residual = 0.0;   // after the static polish of this stage
    double descent_worst = 0.0;     // max over accepted steps of J_new - J_old
    double dissipation_min = 0.0;   // min over nodes and steps of (log a - log b)(a - b)
    double properness_slack = 0.0;  // min over steps of J - theta_J E + K_J
    double ut_over_M = 0.0;
    double ma_min = 0.0;
    double compatibility = 0.0;
};

struct SublinearOptions {
    std::vector<double> m_levels{4.0, 8.0};
    std::vector<double> eps_levels{1e-2, 1e-4, 1e-6, 1e-8};
    double tol = 1e-5;
    double blend_delta = 0.05;
    double t_max = 400.0;
    double steady_tol = 1e-7;
    double dt_init = 1e-3;
    double dt_max = 50.0;
    int challenge = 50;
    unsigned seed = 1;
    double theta = 0.5;
};

struct ChallengeEntry {
    std::string kind;
    double scale = 0.0;
    double J = 0.0;
};

struct SublinearReport {
    RadialFn u;
    double lambda1 = 0.0;
    double residual = 0.0;
    double J = 0.0;
    double E = 0.0;
    double norm = 0.0;
    bool converged = false;
    std::vector<StageRecord> stages;
    std::vector<FlowDiagnostics> trajectory;   // all stages, in order
    double descent_worst = 0.0;
    double dissipation_min = 0.0;
    double theta_J = 0.0, K_J = 0.0, properness_slack = 0.0;
    std::vector<ChallengeEntry> challenge;
    double challenge_gap = 0.0;   // min_w J(w) - J(u)
    ValidationReport validation;
    std::string to_json() const;
};

SublinearReport run_sublinear(const Nonlinearity& nl, const GridPtr& g, double lambda1, const SublinearOptions& opt);

struct EnergyProbe {
    double dissipation = 0.0;     // int |alpha - beta|^{p+1}
    double E = 0.0;
    double beta_integral = 0.0;   // int (-u) beta^p
    double termwise_min = 0.0;    // min over nodes of (alpha^p - beta^p)(alpha - beta) - |alpha - beta|^{p+1}
    bool finite = false;
};

/// alpha = ma_rad(u)^{1/p}, beta = psi^n(., u)^{1/p} at the equation nodes.
EnergyProbe energy_control_probe(const RadialFn& u, const Nonlinearity& nl, double p);

struct SuperlinearOptions {
    int m_path = 17;
    int seed_path = 0;   // 0: density interpolation, 1: with a positive bump
    std::vector<double> delta_levels{1e-1, 1e-2, 1e-3};
    std::vector<double> a_fractions{0.1, 0.01, 0.001};
    double tol = 1e-3;
    double barrier = 0.5;
    double horizon = 80.0;
    int max_bisections = 30;
    double blend_delta = 0.05;
    double dt_init = 1e-3;
    double dt_max = 5.0;
    int sobolev_samples = 100;
    unsigned seed = 1;
    int max_refinements = 2;
};

struct PathState {
    std::vector<double> sigma;       // path parameters of the points
    std::vector<RadialFn> points;    // current points
    double c_estimate = 0.0;         // running sup_k J(points[k])
    double a = 0.0;
    std::vector<int> good_set;       // indices in I_t at the last barrier
};

struct DeltaStage {
    double delta = 0.0;
    double a = 0.0;
    int m_path = 0;
    double path_sup_J0 = 0.0;     // sup of J_delta over the seed path
    double c_delta = 0.0;
    double saddle_residual = 0.0;
    int bisections = 0;
    double s0_sigma = 0.0;
    double s0_time_in_I = 0.0;
    double T0c_measure = 0.0;     // measure of bad times of s0 while it is in I_t
    double energy_K_emp = 0.0;    // max over good times of E and int (-u) beta^p
    double probe_termwise_min = 0.0;
    bool endpoints_ok = true;
    std::vector<std::pair<double, std::vector<double>>> path_J;  // barrier time, J per point
    PathState path;               // the seed-path points at the end of the stage
};

struct SuperlinearReport {
    RadialFn u;
    double lambda1 = 0.0;
    double residual = 0.0;
    double J = 0.0;
    double c = 0.0;
    double norm = 0.0;
    bool converged = false;
    double K_endpoint = 0.0, eps_endpoint = 0.0;
    double J_v0 = 0.0, J_v1 = 0.0;
    double theta = 0.0, K_m = 0.0, sobolev_C = 0.0, k_m = 0.0, c_lower = 0.0;
    TruncationParams truncation;
    double mu_p = 0.0;
    std::vector<DeltaStage> stages;
    double T0c_max = 0.0;
    ValidationReport validation;
    std::string to_json() const;
};

SuperlinearReport run_superlinear(const Nonlinearity& nl, const GridPtr& g, double lambda1,
                                  const SuperlinearOptions& opt);

/// CSV with columns t, J_0, ..., J_{m-1} (empty cells once a point has stopped).
void write_path_csv(const std::string& path, const DeltaStage& st, const std::string& header_comment = "");

}  // namespace cmalab
