#pragma once

#include <limits>
#include <string>
#include <vector>

namespace cmalab {

/// Concave reparametrization mu(t) = tau(log t), tau(s) = int_0^s e^{x/p} phi(x) dx, with
///   mu = log t on (0, 1],  mu = t^{1/p} on [e^2, inf),  mu' > 0,  t^2 mu'' + t mu' <= (t/p) mu'.
/// phi is e^{-s/p} for s <= 0, a smooth drop to 1 - eps on [0, 2 eps], then a smooth ramp of
/// width `ramp` down to 1/p ending at the knot; the knot is bisected so that tau(2) = e^{2/p}.
/// p = inf gives mu = log.
class MuFunction {
public:
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    static MuFunction log_branch();
    static MuFunction build(double p, double epsilon = 1e-2, double ramp = 0.5);

    double p() const { return p_; }
    bool is_log() const { return !(p_ < kInf); }
    double epsilon() const { return eps_; }
    double knot() const { return knot_; }
    double ramp() const { return ramp_; }
    double t_low() const { return 1.0; }
    double t_high() const;

    double operator()(double t) const { return value(t); }
    double value(double t) const;
    double d1(double t) const;
    double d2(double t) const;
    /// mu^{-1}(y); throws when y is outside the range of mu.
    double inverse(double y) const;

    double tau(double s) const;
    double tau_d1(double s) const;
    double tau_d2(double s) const;
    double phi(double s) const;
    double phi_d1(double s) const;

    /// int_0^2 e^{x/p} phi(x) dx for the stored knot; equals e^{2/p} up to the bisection tolerance.
    double condition_iv_integral() const;

    /// A copy whose phi gains a bump of the given amplitude on [0.6, 1.4] (for fault-injection tests).
    MuFunction with_fault(double amplitude) const;

private:
    double p_ = kInf, eps_ = 0.0, ramp_ = 0.0, knot_ = 0.0, fault_ = 0.0;
    std::vector<double> table_s_, table_tau_;  // cumulative tau at panel edges on [0, 2]

    void build_table();
};

/// (t1 - t2)(mu(t1) - mu(t2)) and (t1 - t2)(t1^{1/p} - t2^{1/p}).
struct SlopePair {
    double lhs = 0.0, rhs = 0.0;
};
SlopePair slope_lower(const MuFunction& mu, double t1, double t2);

/// sum_{ij} d^2 F / d lambda_i d lambda_j xi_i xi_j for F(lambda) = mu(prod lambda_i).
double concavity_check(const MuFunction& mu, int n, const std::vector<double>& lambda, const std::vector<double>& xi);

struct MuCertificate {
    struct Item {
        std::string name;
        bool pass = false;
        double slack = 0.0;   // worst observed margin (>= 0 is good)
        long samples = 0;
    };
    std::vector<Item> items;
    bool all_pass() const;
    std::string to_json() const;
};

/// Runs the property checks (branches, monotonicity, differential inequality, condition iv,
/// slope inequality, concavity) with the given sample counts and seed.
MuCertificate certify_mu(const MuFunction& mu, long dense_samples = 100000, long pair_samples = 10000,
                         long form_samples = 1000, unsigned seed = 1);

}  // namespace cmalab
