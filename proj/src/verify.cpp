#include "cmalab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include <json.hpp>

#include "cmalab/drivers.hpp"
#include "cmalab/error.hpp"
#include "cmalab/flow.hpp"
#include "cmalab/functionals.hpp"
#include "cmalab/ma_operator.hpp"
#include "cmalab/ma_solvers.hpp"
#include "cmalab/mu.hpp"

namespace cmalab {

namespace {

constexpr double kInfD = std::numeric_limits<double>::infinity();

double bessel_j0(double x) {
    double term = 1.0, sum = 1.0, q = x * x / 4.0;
    for (int k = 1; k < 200; ++k) {
        term *= -q / (static_cast<double>(k) * k);
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

double max_abs_diff(const RadialFn& a, const RadialFn& b) {
    double d = 0.0;
    for (int j = 0; j < a.size(); ++j) d = std::max(d, std::abs(a[j] - b[j]));
    return d;
}

RadialFn scaled(const RadialFn& v, double c) { return c * v; }

class Suite {
public:
    explicit Suite(VerifyReport& r) : rep_(r) {}

    // A check that throws is a failure with slack -inf.
    void run(const std::string& module, const std::string& property, const std::function<double()>& body) {
        double slack = -kInfD;
        try {
            slack = body();
        } catch (const std::exception&) {
            slack = -kInfD;
        }
        slack += 0.0;
        rep_.items.push_back({property, module, slack >= 0.0 && !std::isnan(slack), slack});
    }

private:
    VerifyReport& rep_;
};

}  // namespace

double bessel_j0_first_zero() {
    double a = 2.0, b = 3.0;
    for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
        double c = 0.5 * (a + b);
        if ((bessel_j0(a) > 0.0) == (bessel_j0(c) > 0.0))
            a = c;
        else
            b = c;
    }
    return 0.5 * (a + b);
}

bool VerifyReport::all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const Item& i) { return i.pass; });
}

std::string VerifyReport::to_json() const {
    nlohmann::json j;
    j["all_pass"] = all_pass();
    j["seed"] = seed;
    j["properties"] = nlohmann::json::array();
    for (const auto& it : items) {
        nlohmann::json e;
        e["property"] = it.property;
        e["module"] = it.module;
        e["pass"] = it.pass;
        if (std::isfinite(it.slack))
            e["slack"] = it.slack;
        else
            e["slack"] = it.slack > 0 ? "inf" : (std::isnan(it.slack) ? "nan" : "-inf");
        j["properties"].push_back(e);
    }
    return j.dump(2);
}

VerifyReport verify_suite(const RunConfig& cfg) {
    VerifyReport rep;
    rep.seed = cfg.seed;
    Suite S(rep);
    std::mt19937_64 rng(cfg.seed);
    const int N = cfg.N;

    // ---------------------------------------------------------------- radial_domain
    S.run("radial_domain", "quadrature_moment", [&] {
        double worst = 0.0;
        for (int n = 1; n <= 3; ++n) {
            auto g = make_grid(n, N, cfg.clustering);
            double sum = 0.0;
            for (double q : g->quad) sum += q;
            worst = std::max(worst, rel(sum, 1.0 / n));
        }
        return 1e-12 - worst;
    });
    S.run("radial_domain", "nodes_strictly_increasing", [&] {
        auto g = make_grid(cfg.n, N, cfg.clustering);
        bool ok = g->s.front() == 0.0 && g->s.back() == 1.0;
        for (int j = 1; j < g->size(); ++j) ok = ok && g->s[j] > g->s[j - 1];
        return ok ? 0.0 : -1.0;
    });
    S.run("radial_domain", "psh_project_idempotent", [&] {
        auto g = make_grid(cfg.n, N, cfg.clustering);
        double worst = 0.0;
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        for (int k = 0; k < 10; ++k) {
            double a = U(rng), b = U(rng), c = 1.0 + 6.0 * std::abs(U(rng));
            RadialFn v = sample(g, [&](double s) { return (a * std::sin(c * M_PI * s) + b * s) * (1.0 - s) + (s - 1.0); });
            v.values.back() = 0.0;
            RadialFn p1 = psh_project(v, 0.0);
            RadialFn p2 = psh_project(p1, 0.0);
            worst = std::max(worst, max_abs_diff(p1, p2));
        }
        return -worst;
    });
    S.run("radial_domain", "psh_implies_ma_nonnegative", [&] {
        auto g = make_grid(cfg.n, N, cfg.clustering);
        double worst = kInfD;
        for (int k = 0; k < 20; ++k) {
            RadialFn v = random_psh(g, rng);
            auto m = ma_raw(v);
            for (int j = 0; j + 1 < g->size(); ++j) worst = std::min(worst, m[j]);
        }
        return worst + kNegTol;
    });
    S.run("radial_domain", "integration_by_parts", [&] {
        double worst = -kInfD;
        for (int n = 1; n <= 3; ++n) {
            auto g = make_grid(n, N, cfg.clustering);
            RadialFn v = sample(g, [](double s) { return s * (1.0 - s) * std::exp(s); });
            auto dv = d1(v);
            std::vector<double> f(g->size());
            for (int j = 0; j < g->size(); ++j) f[j] = dv[j] * g->s[j];
            double lhs = integrate(*g, f) + n * integrate(v);
            worst = std::max(worst, std::abs(lhs) - 10.0 * g->h_max * g->h_max * g->domain.vol_const);
        }
        return -worst;
    });

    // ---------------------------------------------------------------- functionals
    S.run("functionals", "oracle_round_trip", [&] {
        double worst = -kInfD;
        std::vector<std::function<double(double)>> dens{[](double) { return 1.0; }, [](double s) { return 1.0 + s; },
                                                        [](double s) { return 2.0 + std::sin(3.0 * s); }};
        for (int n = 1; n <= 3; ++n) {
            auto g = make_grid(n, N, cfg.clustering);
            for (const auto& gf : dens) {
                std::vector<double> gv(g->size());
                for (int j = 0; j < g->size(); ++j) gv[j] = gf(g->s[j]);
                auto m = ma_rad(solve_radial_ma(g, gv));
                double err = 0.0;
                for (int j = 0; j + 1 < g->size(); ++j) err = std::max(err, std::abs(m[j] - gv[j]) / gv[j]);
                worst = std::max(worst, err - 50.0 * g->h_max * g->h_max);
            }
        }
        return -worst;
    });
    S.run("functionals", "energy_homogeneity", [&] {
        double worst = 0.0;
        for (int n = 1; n <= 3; ++n) {
            auto g = make_grid(n, N, cfg.clustering);
            RadialFn v = random_psh(g, rng);
            double E = energy_E(v), I = energy_I(v);
            for (double c : {0.5, 2.0, 10.0}) {
                double k = std::pow(c, n + 1);
                worst = std::max(worst, rel(energy_E(scaled(v, c)), k * E));
                worst = std::max(worst, rel(energy_I(scaled(v, c)), k * I));
            }
        }
        return 1e-12 - worst;
    });
    S.run("functionals", "first_variation", [&] {
        auto g = make_grid(cfg.n, std::min(N, 512), cfg.clustering);
        auto eig = eigen_inverse_iteration(g);
        Nonlinearity nl = make_sublinear_test(eig.lambda1, cfg.n);
        double worst = 0.0;
        for (int k = 0; k < 5; ++k) {
            RadialFn v = random_psh(g, rng, 0.2, 2.0);
            RadialFn phi = sample(g, [&](double s) { return std::sin((k + 1) * M_PI * s) * (1.0 - s); });
            phi.values.back() = 0.0;
            const double h = 1e-5;
            double fd = (functional_J(v + h * phi, nl) - functional_J(v - h * phi, nl)) / (2.0 * h);
            auto grad = functional_J_gradient(v, nl);
            double an = 0.0;
            for (int j = 0; j < g->size(); ++j) an += grad[j] * phi[j];
            worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-12));
        }
        return 1e-4 - worst;
    });
    S.run("functionals", "rigidity_no_admissible_sample", [&] {
        auto g = make_grid(cfg.n, std::min(N, 512), cfg.clustering);
        auto eig = eigen_inverse_iteration(g);
        const double theta = 0.2;
        const double bound = std::pow((1.0 - theta) * eig.lambda1, cfg.n);
        int admissible = 0;
        for (int k = 0; k < 50; ++k) {
            RadialFn v = random_psh(g, rng);
            auto m = ma_rad(v);
            bool premise = energy_E(v) > 1e-6;
            for (int j = 0; j + 1 < g->size() && premise; ++j) premise = m[j] <= bound * std::pow(-v[j], cfg.n);
            if (premise) ++admissible;
        }
        return -static_cast<double>(admissible);
    });
    S.run("functionals", "rayleigh_lower_bound", [&] {
        auto g = make_grid(cfg.n, std::min(N, 512), cfg.clustering);
        auto eig = eigen_inverse_iteration(g);
        double lo = kInfD;
        for (int k = 0; k < 50; ++k) lo = std::min(lo, rayleigh(random_psh(g, rng)));
        return lo / std::pow(eig.lambda1, cfg.n) - 1.0 + 1e-8;
    });
    S.run("functionals", "scale_invariance", [&] {
        double worst = 0.0;
        for (int n = 1; n <= 3; ++n) {
            auto g = make_grid(n, N, cfg.clustering);
            RadialFn v = random_psh(g, rng);
            worst = std::max(worst, rel(mt_check(scaled(v, 5.0), 1.0), mt_check(v, 1.0)));
            worst = std::max(worst, rel(sobolev_check(scaled(v, 2.0), 2.0), sobolev_check(v, 2.0)));
            worst = std::max(worst, rel(rayleigh(scaled(v, 3.0)), rayleigh(v)));
        }
        return 1e-10 - worst;
    });

    // ---------------------------------------------------------------- mu_construction
    for (double p : {3.0, 4.0, 8.0}) {
        MuFunction mu = MuFunction::build(p, cfg.mu_eps);
        if (cfg.mu_fault > 0.0) mu = mu.with_fault(cfg.mu_fault);
        MuCertificate cert = certify_mu(mu, 100000, 10000, 1000, static_cast<unsigned>(cfg.seed));
        std::string tag = "mu_p" + std::to_string(static_cast<int>(p)) + ":";
        for (const auto& it : cert.items) S.run("mu_construction", tag + it.name, [&] { return it.pass ? it.slack : std::min(it.slack, -1e-300); });
    }

    // ---------------------------------------------------------------- ma_solvers
    auto g1 = make_grid(1, N, cfg.clustering);
    EigenResult e_inv, e_desc;
    S.run("ma_solvers", "eigen_bessel_oracle", [&] {
        e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        double z = bessel_j0_first_zero();
        return 1e-4 - rel(e_inv.lambda1, z * z / 4.0);
    });
    S.run("ma_solvers", "eigen_pair_identity", [&] {
        double worst = 0.0;
        for (int n = 1; n <= 2; ++n) {
            auto g = make_grid(n, N, cfg.clustering);
            auto e = eigen_inverse_iteration(g, cfg.tol, cfg.max_iter);
            double E = energy_E(e.u1), I = energy_I(e.u1);
            worst = std::max(worst, std::abs(E - std::pow(e.lambda1, n) * I) / E);
        }
        return 1e-4 - worst;
    });
    S.run("ma_solvers", "eigen_methods_agree", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        e_desc = eigen_rayleigh_descent(g1, cfg.tol, cfg.max_iter);
        return 1e-3 - rel(e_desc.lambda1, e_inv.lambda1);
    });
    S.run("ma_solvers", "inverse_monotone", [&] {
        auto g = make_grid(cfg.n, N, cfg.clustering);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        int failures = 0;
        for (int k = 0; k < 10; ++k) {
            std::vector<double> a(g->size()), b(g->size());
            for (int j = 0; j < g->size(); ++j) {
                a[j] = 0.5 + std::sin(3.0 * g->s[j] + k) * 0.3;
                b[j] = a[j] + 0.05 + U(rng);
            }
            auto v = comparison_check(solve_radial_ma(g, b), solve_radial_ma(g, a));
            if (!v.premise || !v.verdict()) ++failures;
        }
        return -static_cast<double>(failures);
    });
    S.run("ma_solvers", "comparison_examples", [&] {
        auto g = make_grid(cfg.n, N, cfg.clustering);
        std::vector<double> two(g->size(), 2.0), one(g->size(), 1.0);
        auto c1 = comparison_check(solve_radial_ma(g, two), solve_radial_ma(g, one));
        RadialFn lin = sample(g, [](double s) { return s - 1.0; });
        auto c2 = comparison_check(lin, scaled(lin, 0.5));
        auto c3 = comparison_check(lin, lin);
        bool ok = c1.premise && c1.conclusion && c2.premise && c2.conclusion && c3.equal && c3.verdict();
        return ok ? 0.0 : -1.0;
    });
    S.run("ma_solvers", "rigidity_decay", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        auto sups = rigidity_iteration(g1, e_inv.lambda1, 0.2, 20);
        double worst = 0.0;
        for (std::size_t k = 1; k < sups.size(); ++k) worst = std::max(worst, sups[k] / sups[k - 1]);
        return 1.0 - worst;
    });

    // ---------------------------------------------------------------- mu_flow
    S.run("mu_flow", "zero_forcing_fixed_point", [&] {
        FlowConfig fc;
        fc.mu = MuFunction::log_branch();
        fc.forcing = constant_forcing(0.0);
        fc.t_end = 0.1;
        fc.steady_tol = -1.0;
        RadialFn v0 = sample(g1, [](double s) { return s - 1.0; });
        return 1e-12 - max_abs_diff(run(fc, v0).v, v0);
    });
    S.run("mu_flow", "eigen_stationary", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        FlowConfig fc;
        fc.mu = MuFunction::log_branch();
        fc.forcing = eigen_forcing(1, e_inv.lambda1, fc.mu, 0.0);
        fc.t_end = 10.0;
        fc.steady_tol = -1.0;
        auto st = run(fc, e_inv.u1);
        return 1e-4 - max_abs_diff(st.v, e_inv.u1);
    });
    S.run("mu_flow", "stability_contraction", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        FlowConfig fc;
        fc.mu = MuFunction::log_branch();
        fc.forcing = eigen_forcing(1, e_inv.lambda1, fc.mu, 1.0);
        RadialFn b = e_inv.u1;
        for (int j = 0; j < g1->size(); ++j) b[j] += 1e-3 * (g1->s[j] - 1.0);
        auto a0 = prepare_initial(e_inv.u1, fc.forcing, fc.mu, cfg.blend_delta);
        auto b0 = prepare_initial(b, fc.forcing, fc.mu, cfg.blend_delta);
        auto r = stability_pair(fc, a0, b0, 1.0);
        return r.bound + r.slack - r.sup_gap;
    });
    S.run("mu_flow", "uniform_bound_and_sign", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        FlowConfig fc;
        fc.mu = MuFunction::build(4.0, cfg.mu_eps);
        fc.forcing = eigen_forcing(1, e_inv.lambda1, fc.mu, 1.0);
        fc.t_end = 2.0;
        auto v0 = prepare_initial(e_inv.u1, fc.forcing, fc.mu, cfg.blend_delta);
        FlowState st = make_flow_state(fc, v0);
        const double u0 = v0.sup_norm(), h2 = g1->h_max * g1->h_max;
        double worst = kInfD;
        while (st.t < fc.t_end - 1e-14) {
            step(st, fc, fc.t_end - st.t);
            if (st.v.values.back() != 0.0) return -1.0;
            for (double x : st.v.values)
                if (x > 0.0) return -x;
            worst = std::min(worst, st.diag.u_min - uniform_lower_bound(fc, 1, u0, st.t) + 10.0 * h2);
            worst = std::min(worst, st.diag.ma_min);
        }
        return worst;
    });
    S.run("mu_flow", "slope_chain_dissipation", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        FlowConfig fc;
        fc.mu = MuFunction::build(4.0, cfg.mu_eps);
        fc.forcing = eigen_forcing(1, e_inv.lambda1, fc.mu, 1.0);
        fc.t_end = 1.0;
        RadialFn raw = scaled(e_inv.u1, 1.5);
        auto st = run(fc, prepare_initial(raw, fc.forcing, fc.mu, cfg.blend_delta));
        double worst = kInfD;
        for (std::size_t k = 1; k < st.history.size(); ++k)
            worst = std::min({worst, st.history[k].dissipation_min, st.history[k].slope_chain_min});
        return worst;
    });
    S.run("mu_flow", "sublinear_compatibility", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        MuFunction mu = MuFunction::log_branch();
        Forcing f = forcing_from_nonlinearity(perturbed(make_sublinear_test(e_inv.lambda1, 1), 1e-2), mu);
        auto v0 = prepare_initial(scaled(e_inv.u1, 0.5), f, mu, cfg.blend_delta);
        return 1e-8 - compatibility_residual(v0, f, mu);
    });

    // ---------------------------------------------------------------- variational_drivers
    S.run("variational_drivers", "sublinear_validator", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        return validate_sublinear(make_sublinear_test(e_inv.lambda1, 1), e_inv.lambda1).ok ? 0.0 : -1.0;
    });
    S.run("variational_drivers", "superlinear_validator", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        return validate_superlinear(make_superlinear_test(e_inv.lambda1, 1), e_inv.lambda1).ok ? 0.0 : -1.0;
    });
    S.run("variational_drivers", "truncation_consistency", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        Nonlinearity nl = make_superlinear_test(e_inv.lambda1, 1);
        const double m = 8.0;
        Nonlinearity tb = truncate_bounded(nl, m);
        auto tp = truncation_params(nl, m, 0.0);
        Nonlinearity tp_nl = truncate_polynomial(nl, tp);
        double worst = 0.0;
        for (int k = 0; k <= 1000; ++k) {
            double x = -m * k / 1000.0;
            for (double s : {0.0, 0.5, 1.0}) {
                worst = std::max(worst, std::abs(tb.rhs(s, x) - nl.rhs(s, x)));
                worst = std::max(worst, std::abs(tp_nl.rhs(s, x) - nl.rhs(s, x)));
            }
        }
        double far = std::abs(tb.rhs(0.5, -2.0 * m) - tb.rhs(0.5, -5.0 * m));
        return -(worst + far);
    });
    S.run("variational_drivers", "energy_probe_termwise", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        Nonlinearity nl = perturbed(make_superlinear_test(e_inv.lambda1, 1), 1e-2);
        double worst = kInfD;
        for (int k = 0; k < 5; ++k) {
            auto pr = energy_control_probe(random_psh(g1, rng), nl, 3.0);
            if (!pr.finite) return -1.0;
            worst = std::min(worst, pr.termwise_min);
        }
        return worst;
    });
    S.run("variational_drivers", "sublinear_descent_end_to_end", [&] {
        if (e_inv.u1.size() == 0) e_inv = eigen_inverse_iteration(g1, cfg.tol, cfg.max_iter);
        SublinearOptions opt;
        opt.challenge = 10;
        opt.seed = static_cast<unsigned>(cfg.seed);
        auto r = run_sublinear(make_sublinear_test(e_inv.lambda1, 1), g1, e_inv.lambda1, opt);
        return std::min({1e-5 - r.residual, 1e-9 - r.descent_worst, r.dissipation_min, -r.J, r.norm - 1e-3,
                         r.challenge_gap, r.properness_slack});
    });

    // ---------------------------------------------------------------- cli
    S.run("cli", "config_round_trip", [&] {
        std::string text = config_to_text(cfg);
        return config_to_text(parse_config(text)) == text ? 0.0 : -1.0;
    });
    return rep;
}

}  // namespace cmalab
