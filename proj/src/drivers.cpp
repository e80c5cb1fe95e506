#include "cmalab/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "cmalab/banded.hpp"
#include "cmalab/error.hpp"
#include "cmalab/ma_operator.hpp"
#include "cmalab/ma_solvers.hpp"

namespace cmalab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInfD = std::numeric_limits<double>::infinity();

double smooth_step(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return 1.0 / (1.0 + std::exp(1.0 / x - 1.0 / (1.0 - x)));
}

std::vector<double> logspace(double a, double b, int k) {
    std::vector<double> out(k);
    for (int i = 0; i < k; ++i) out[i] = std::exp(std::log(a) + (std::log(b) - std::log(a)) * i / (k - 1));
    return out;
}

RadialFn scaled(const RadialFn& v, double c) {
    RadialFn out = v;
    for (double& x : out.values) x *= c;
    return out;
}

nlohmann::json json_num(double x) {
    if (std::isfinite(x)) return x;
    return nullptr;
}

// sup_x psi^n(s, x) - (1 - theta) lambda^n |x|^n over sampled x and s.
double linear_excess(const Nonlinearity& nl, double lambda1, double theta) {
    const int n = nl.n;
    double K = 0.0;
    for (double s : {0.0, 0.5, 1.0}) {
        for (double r : logspace(1e-6, 1e4, 4001)) {
            double v = nl.rhs(s, -r) - (1.0 - theta) * std::pow(lambda1, n) * std::pow(r, n);
            if (std::isfinite(v)) K = std::max(K, v);
        }
    }
    return K;
}

}  // namespace

void ValidationReport::check(const std::string& name, bool pass) {
    checks.emplace_back(name, pass);
    ok = ok && pass;
}

std::string ValidationReport::to_json() const {
    nlohmann::json j;
    j["ok"] = ok;
    for (const auto& [k, v] : values) j["values"][k] = json_num(v);
    for (const auto& [k, v] : checks) j["checks"][k] = v;
    j["X_big"] = X_big;
    j["M_emp"] = M_emp;
    j["X_star"] = X_star;
    return j.dump(2);
}

Nonlinearity make_sublinear_test(double lambda1, int n) {
    if (!(lambda1 > 0.0)) throw InvalidArgument("make_sublinear_test: lambda1 must be positive");
    Nonlinearity nl;
    nl.n = n;
    nl.name = "psi_sub";
    nl.growth = GrowthClass::sublinear;
    const double L = 2.0 * lambda1;
    nl.rhs = [L, n](double, double x) {
        double r = std::abs(x);
        return std::pow(L * r / (1.0 + r), n);
    };
    nl.rhs_dx = [L, n](double, double x) {
        if (x > 0.0) return 0.0;
        double r = -x;
        double p = L * r / (1.0 + r);
        // d/dx = -d/dr
        return -n * std::pow(p, n - 1) * L / ((1.0 + r) * (1.0 + r));
    };
    if (n == 1) nl.Psi = [L](double, double x) {
        double r = std::abs(x);
        return L * (r - std::log1p(r));
    };
    nl.theta = 0.5;
    return nl;
}

ValidationReport validate_sublinear(const Nonlinearity& nl, double lambda1) {
    ValidationReport rep;
    double near = nl.psi(0.5, -1e-6) / 1e-6;
    double far = nl.psi(0.5, -1e6) / 1e6;
    rep.values.emplace_back("ratio_near_zero", near);
    rep.values.emplace_back("ratio_far", far);
    rep.check("ratio at x=-1e-6 >= 1.9 lambda1", near >= 1.9 * lambda1);
    rep.check("ratio at x=-1e6 <= 1e-5 lambda1", far <= 1e-5 * lambda1);
    bool positive = true;
    for (double r : logspace(1e-8, 1e8, 2001)) positive = positive && nl.rhs(0.5, -r) > 0.0;
    rep.check("psi > 0 for x < 0", positive);
    auto xs = logspace(1e-6, 1e6, 6001);
    rep.X_big = xs.back();
    for (int i = static_cast<int>(xs.size()) - 1; i >= 0; --i) {
        if (nl.psi(0.5, -xs[i]) / xs[i] >= lambda1) break;
        rep.X_big = xs[i];
    }
    rep.values.emplace_back("X_big", rep.X_big);
    return rep;
}

Nonlinearity make_superlinear_test(double lambda1, int n) {
    if (!(lambda1 > 0.0)) throw InvalidArgument("make_superlinear_test: lambda1 must be positive");
    Nonlinearity nl;
    nl.n = n;
    nl.name = "psi_sup";
    nl.growth = GrowthClass::superlinear;
    const double h = 0.5 * lambda1;
    nl.rhs = [h, n](double, double x) {
        double r = std::abs(x);
        return std::pow(h * (r + r * r), n);
    };
    nl.rhs_dx = [h, n](double, double x) {
        if (x > 0.0) return 0.0;
        double r = -x;
        return -n * std::pow(h * (r + r * r), n - 1) * h * (1.0 + 2.0 * r);
    };
    if (n == 1) nl.Psi = [h](double, double x) {
        double r = std::abs(x);
        return h * (r * r / 2.0 + r * r * r / 3.0);
    };
    nl.theta = n / (2.0 * n + 2.0);
    nl.sigma = n;
    return nl;
}

ValidationReport validate_superlinear(const Nonlinearity& nl, double lambda1) {
    ValidationReport rep;
    const int n = nl.n;
    const double theta = nl.theta;
    double near = nl.psi(0.5, -1e-6) / 1e-6;
    rep.values.emplace_back("ratio_near_zero", near);
    rep.check("ratio at x=-1e-6 < lambda1", near < lambda1);

    // sigma = n: psi^n e^{-sigma |x|^{1+1/n}} -> 0
    double tail = 0.0;
    for (double r : {20.0, 50.0, 100.0})
        tail = std::max(tail, nl.rhs(0.5, -r) * std::exp(-nl.sigma * std::pow(r, 1.0 + 1.0 / n)));
    rep.values.emplace_back("exp_growth_tail", tail);
    rep.check("psi^n exp(-sigma |x|^(1+1/n)) -> 0", tail < 1e-6);

    // M_emp: both large-x conditions hold for every sampled x <= -M_emp
    auto xs = logspace(1e-3, 1e4, 7001);
    auto holds = [&](double r) {
        double rhs = nl.rhs(0.5, -r);
        bool lower = (1.0 + theta) * std::pow(lambda1, n) * std::pow(r, n) <= rhs;
        bool integ = big_psi(nl, 0.5, -r) <= (1.0 - theta) / (n + 1) * r * rhs;
        return lower && integ;
    };
    int first = static_cast<int>(xs.size());
    for (int i = static_cast<int>(xs.size()) - 1; i >= 0 && holds(xs[i]); --i) first = i;
    rep.check("growth conditions hold on a tail", first < static_cast<int>(xs.size()));
    rep.M_emp = first < static_cast<int>(xs.size()) ? std::max(1.0, xs[first]) : kInfD;
    rep.values.emplace_back("M_emp", rep.M_emp);
    rep.values.emplace_back("theta", theta);

    double r10 = nl.psi(0.5, -10.0) / 10.0, r100 = nl.psi(0.5, -100.0) / 100.0, r1000 = nl.psi(0.5, -1000.0) / 1000.0;
    rep.check("psi/|x| increasing at 10, 100, 1000", r10 < r100 && r100 < r1000);
    rep.X_star = kInfD;
    for (int i = static_cast<int>(xs.size()) - 1; i >= 0; --i) {
        if (nl.psi(0.5, -xs[i]) / xs[i] <= lambda1) break;
        rep.X_star = xs[i];
    }
    rep.values.emplace_back("X_star", rep.X_star);
    rep.check("psi/|x| exceeds lambda1 on a tail", std::isfinite(rep.X_star));
    if (!rep.ok) throw InvalidArgument("validate_superlinear: " + rep.to_json());
    return rep;
}

Nonlinearity truncate_bounded(const Nonlinearity& nl, double m) {
    if (!(m > 0.0)) throw InvalidArgument("truncate_bounded: m must be positive");
    Nonlinearity out = nl;
    out.name = nl.name + "_m";
    auto y = [m](double r) {
        if (r <= m) return r;
        if (r >= 2.0 * m) return 1.5 * m;
        return r - (r - m) * (r - m) / (2.0 * m);
    };
    auto dy = [m](double r) {
        if (r <= m) return 1.0;
        if (r >= 2.0 * m) return 0.0;
        return 1.0 - (r - m) / m;
    };
    auto f = nl.rhs, fdx = nl.rhs_dx;
    out.rhs = [f, y](double s, double x) { return f(s, -y(std::abs(x))); };
    out.rhs_dx = [fdx, y, dy](double s, double x) {
        double r = std::abs(x);
        return fdx(s, -y(r)) * dy(r);
    };
    if (nl.Psi) {
        auto P = nl.Psi;
        Nonlinearity base = out;
        base.Psi = nullptr;
        out.Psi = [P, base, m](double s, double x) {
            if (x >= -m) return P(s, x);
            return P(s, -m) + big_psi_quadrature(base, s, x) - big_psi_quadrature(base, s, -m);
        };
    } else {
        out.Psi = nullptr;
    }
    return out;
}

TruncationParams truncation_params(const Nonlinearity& nl, double m, double delta) {
    TruncationParams tp;
    tp.m = m;
    tp.delta = delta;
    const int n = nl.n;
    for (double s : {0.0, 0.5, 1.0}) tp.B = std::max(tp.B, nl.rhs(s, -m));
    tp.delta_m = 1.0 / (tp.B + 1.0);
    for (int p = n + 2; p <= 64; ++p) {
        double prev = kInfD;
        bool decays = true;
        for (double r : logspace(std::max(m, 10.0), 1e4, 41)) {
            double q = nl.psi(0.5, -r) / std::pow(r, static_cast<double>(p) / n);
            decays = decays && q <= prev * (1.0 + 1e-12);
            prev = q;
        }
        if (decays && prev < 1e-2) {
            tp.p_trunc = p;
            tp.active = false;
            tp.K_m = (tp.B + 1.0) * std::pow(m, 1.0 - p);
            return tp;
        }
    }
    int p = n + 2;
    while ((n + 1.0) / p >= nl.theta / 2.0) ++p;
    tp.p_trunc = p;
    tp.active = true;
    tp.K_m = (tp.B + 1.0) * std::pow(m, 1.0 - p);
    return tp;
}

Nonlinearity truncate_polynomial(const Nonlinearity& nl, const TruncationParams& tp) {
    if (!tp.active) return nl;
    Nonlinearity out = nl;
    out.name = nl.name + "_m";
    const double m = tp.m, dm = tp.delta_m, K = tp.K_m;
    const int p = tp.p_trunc;
    auto f = nl.rhs, fdx = nl.rhs_dx;
    auto eval = [f, fdx, m, dm, K, p](double s, double x, bool deriv) {
        double r = std::abs(x);
        if (r <= m) return deriv ? fdx(s, x) : f(s, x);
        double r1 = m + dm;
        if (r >= r1) return deriv ? -K * (p - 1) * std::pow(r, p - 2) : K * std::pow(r, p - 1);
        // cubic Hermite in r between (m, f, df/dr) and (r1, K r1^{p-1}, K (p-1) r1^{p-2})
        double y0 = f(s, -m), d0 = -fdx(s, -m);
        double y1 = K * std::pow(r1, p - 1), d1 = K * (p - 1) * std::pow(r1, p - 2);
        double t = (r - m) / dm;
        double h00 = 2 * t * t * t - 3 * t * t + 1, h10 = t * t * t - 2 * t * t + t;
        double h01 = -2 * t * t * t + 3 * t * t, h11 = t * t * t - t * t;
        if (!deriv) return h00 * y0 + h10 * dm * d0 + h01 * y1 + h11 * dm * d1;
        double g00 = 6 * t * t - 6 * t, g10 = 3 * t * t - 4 * t + 1, g01 = -6 * t * t + 6 * t, g11 = 3 * t * t - 2 * t;
        return -(g00 * y0 / dm + g10 * d0 + g01 * y1 / dm + g11 * d1);
    };
    out.rhs = [eval](double s, double x) { return eval(s, x, false); };
    out.rhs_dx = [eval](double s, double x) { return eval(s, x, true); };
    if (nl.Psi) {
        auto P = nl.Psi;
        Nonlinearity base = out;
        base.Psi = nullptr;
        out.Psi = [P, base, m](double s, double x) {
            if (x >= -m) return P(s, x);
            return P(s, -m) + big_psi_quadrature(base, s, x) - big_psi_quadrature(base, s, -m);
        };
    }
    return out;
}

double eta_delta(double s, double delta) {
    if (delta <= 0.0) return 1.0;
    double d = 1.0 - std::sqrt(std::max(s, 0.0));
    return smooth_step((d - delta) / delta);
}

Nonlinearity boundary_perturbed(const Nonlinearity& nl, double delta) {
    if (delta < 0.0) throw InvalidArgument("boundary_perturbed: delta must be nonnegative");
    Nonlinearity out = nl;
    std::ostringstream name;
    name << nl.name << "_delta" << delta;
    out.name = name.str();
    const double d2 = delta * delta;
    auto f = nl.rhs, fdx = nl.rhs_dx;
    out.rhs = [f, delta, d2](double s, double x) { return eta_delta(s, delta) * f(s, x) + d2; };
    out.rhs_dx = [fdx, delta](double s, double x) { return eta_delta(s, delta) * fdx(s, x); };
    if (nl.Psi) {
        auto P = nl.Psi;
        out.Psi = [P, delta, d2](double s, double x) { return eta_delta(s, delta) * P(s, x) + d2 * std::abs(x); };
    }
    return out;
}

NewtonResult newton_polish(const RadialFn& v0, const Nonlinearity& nl, double tol, int max_iter) {
    const RadialGrid& g = *v0.grid;
    const int M = g.size() - 1;
    NewtonResult out;
    RadialFn v = v0;
    auto residual = [&](const RadialFn& w, std::vector<double>& G) {
        auto m = ma_raw(w);
        G.resize(M);
        double r = 0.0;
        for (int j = 0; j < M; ++j) {
            G[j] = m[j] - nl.rhs(g.s[j], w.values[j]);
            if (!std::isfinite(G[j])) return kInfD;
            r = std::max(r, std::abs(G[j]));
        }
        return r;
    };
    std::vector<double> G, Gt;
    double norm = residual(v, G);
    for (int it = 0; it < max_iter; ++it) {
        if (norm <= tol) {
            out.converged = true;
            break;
        }
        BandMatrix J = ma_jacobian(v);
        for (int i = 0; i < M; ++i) J(i, i) -= nl.rhs_dx(g.s[i], v.values[i]);
        std::vector<double> d(M);
        for (int j = 0; j < M; ++j) d[j] = -G[j];
        if (J.solve_in_place(d) != 0) break;
        double lam = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, lam *= 0.5) {
            RadialFn w = v;
            for (int j = 0; j < M; ++j) w.values[j] += lam * d[j];
            double nt = residual(w, Gt);
            if (nt < norm) {
                v = std::move(w);
                G.swap(Gt);
                norm = nt;
                accepted = true;
                break;
            }
        }
        out.iterations = it + 1;
        if (!accepted) {
            // rounding floor: the Newton update no longer moves the iterate
            double dn = 0.0;
            for (double x : d) dn = std::max(dn, std::abs(x));
            out.converged = dn <= 1e-12 * (1.0 + v.sup_norm()) && norm <= 1e3 * tol;
            break;
        }
    }
    out.u = std::move(v);
    out.residual = norm;
    return out;
}

RadialFn random_psh(const GridPtr& g, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double base = 0.05 + U(rng);
    int bumps = static_cast<int>(U(rng) * 4.0);
    std::vector<double> amp(bumps), ctr(bumps), wid(bumps);
    for (int k = 0; k < bumps; ++k) {
        amp[k] = 3.0 * U(rng);
        ctr[k] = U(rng);
        wid[k] = 0.05 + 0.3 * U(rng);
    }
    std::vector<double> dens(g->size());
    for (int j = 0; j < g->size(); ++j) {
        double v = base;
        for (int k = 0; k < bumps; ++k) v += amp[k] * std::exp(-std::pow((g->s[j] - ctr[k]) / wid[k], 2));
        dens[j] = v;
    }
    RadialFn w = invert_density(g, dens);
    double target = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * U(rng));
    return scaled(w, target / w.sup_norm());
}

// ---------------------------------------------------------------------------------------------
// sublinear driver

std::string SublinearReport::to_json() const {
    nlohmann::json j;
    j["lambda1"] = lambda1;
    j["residual"] = residual;
    j["J"] = J;
    j["E"] = E;
    j["norm"] = norm;
    j["converged"] = converged;
    j["descent_worst"] = descent_worst;
    j["dissipation_min"] = json_num(dissipation_min);
    j["properness"] = {{"theta_J", theta_J}, {"K_J", K_J}, {"slack", properness_slack}};
    j["challenge_gap"] = challenge_gap;
    j["challenge_count"] = challenge.size();
    for (const auto& s : stages) {
        j["cascade"].push_back({{"stage", s.id},
                                {"m", s.m},
                                {"eps", s.eps},
                                {"t", s.t},
                                {"steps", s.steps},
                                {"rejected", s.rejected},
                                {"steady", s.steady},
                                {"J", s.J},
                                {"residual", s.residual},
                                {"descent_worst", s.descent_worst},
                                {"dissipation_min", json_num(s.dissipation_min)},
                                {"properness_slack", s.properness_slack},
                                {"ut_over_M", s.ut_over_M},
                                {"ma_min", s.ma_min},
                                {"compatibility", s.compatibility}});
    }
    j["validation"] = nlohmann::json::parse(validation.to_json());
    return j.dump(2);
}

SublinearReport run_sublinear(const Nonlinearity& nl, const GridPtr& g, double lambda1, const SublinearOptions& opt) {
    if (opt.m_levels.empty() || opt.eps_levels.empty()) throw InvalidArgument("run_sublinear: empty cascade");
    const int n = g->n();
    if (nl.n != n) throw InvalidArgument("run_sublinear: nonlinearity and grid dimensions differ");
    SublinearReport rep;
    rep.lambda1 = lambda1;
    rep.validation = validate_sublinear(nl, lambda1);
    if (!rep.validation.ok) throw InvalidArgument("run_sublinear: nonlinearity is not sublinear-valid");

    EigenResult eig = eigen_inverse_iteration(g);
    const MuFunction mu = MuFunction::log_branch();

    // J >= theta E - K' int|u| >= (theta/2) E - K_J, with int|u| <= C1 E^{1/(n+1)}
    const double theta = opt.theta;
    const double q = 1.0 / (n + 1);
    const double C1 = std::pow(g->domain.volume(), n / (n + 1.0)) * std::pow((n + 1.0) / std::pow(lambda1, n), q);
    rep.theta_J = theta / 2.0;
    auto young = [&](double a) {
        double b = rep.theta_J;
        double e = std::pow(a * q / b, 1.0 / (1.0 - q));
        return b * e * (1.0 - q) / q;
    };

    RadialFn v = scaled(eig.u1, 0.5);
    rep.descent_worst = -kInfD;
    rep.dissipation_min = kInfD;
    rep.properness_slack = kInfD;
    for (double m : opt.m_levels) {
        Nonlinearity nl_m = truncate_bounded(nl, m);
        for (double eps : opt.eps_levels) {
            Nonlinearity nl_me = perturbed(nl_m, eps);
            StageRecord rec;
            std::ostringstream id;
            id << "m=" << m << ",eps=" << eps;
            rec.id = id.str();
            rec.m = m;
            rec.eps = eps;

            FlowConfig cfg;
            cfg.mu = mu;
            cfg.forcing = forcing_from_nonlinearity(nl_me, mu);
            double lo = kInfD, hi = 0.0;
            for (double r : logspace(1e-8, 4.0 * m, 2001)) {
                double b = nl_me.rhs(0.5, -r);
                lo = std::min(lo, b);
                hi = std::max(hi, b);
            }
            lo = std::min(lo, nl_me.rhs(0.5, 0.0));
            cfg.forcing.K1 = std::max(std::abs(std::log(lo)), std::abs(std::log(hi)));
            cfg.forcing.K2 = 0.0;
            cfg.dt_init = opt.dt_init;
            cfg.dt_max = opt.dt_max;
            cfg.t_end = opt.t_max;
            cfg.steady_tol = opt.steady_tol;
            cfg.energy = nl_me;

            double Kp = linear_excess(nl_me, lambda1, theta);
            double K_J = young(Kp * C1);
            rep.K_J = std::max(rep.K_J, K_J);

            RadialFn v0 = prepare_initial(v, cfg.forcing, mu, opt.blend_delta);
            rec.compatibility = compatibility_residual(v0, cfg.forcing, mu);
            FlowState st = make_flow_state(cfg, v0);
            rec.descent_worst = -kInfD;
            rec.dissipation_min = kInfD;
            rec.properness_slack = st.diag.J - rep.theta_J * energy_E(st.v) + K_J;
            long steps = 0;
            while (st.t < opt.t_max && !st.steady) {
                if (steps++ >= cfg.max_steps)
                    throw NumericalError("sublinear " + rec.id, "step budget exhausted at t = " + std::to_string(st.t));
                double J_old = st.diag.J;
                step(st, cfg, opt.t_max - st.t);
                rec.descent_worst = std::max(rec.descent_worst, st.diag.J - J_old);
                rec.dissipation_min = std::min(rec.dissipation_min, st.diag.dissipation_min);
                rec.properness_slack =
                    std::min(rec.properness_slack, st.diag.J - rep.theta_J * energy_E(st.v) + K_J);
                if (st.diag.sup_ut <= cfg.steady_tol) st.steady = true;
            }
            auto mon = monitors(st, cfg);
            rec.t = st.t;
            rec.steps = static_cast<long>(st.history.size()) - 1;
            rec.rejected = st.rejected;
            rec.steady = st.steady;
            rec.ut_over_M = mon.ut_over_M;
            rec.ma_min = mon.ma_min;
            rep.trajectory.insert(rep.trajectory.end(), st.history.begin(), st.history.end());

            NewtonResult nr = newton_polish(st.v, nl_me, 1e-10);
            if (!nr.converged)
                throw NumericalError("sublinear " + rec.id,
                                     "static polish failed, residual " + std::to_string(nr.residual));
            v = nr.u;
            rec.residual = equation_residual(v, nl_me);
            rec.J = functional_J(v, nl_me);
            rep.descent_worst = std::max(rep.descent_worst, rec.descent_worst);
            rep.dissipation_min = std::min(rep.dissipation_min, rec.dissipation_min);
            rep.properness_slack = std::min(rep.properness_slack, rec.properness_slack);
            rep.stages.push_back(rec);
        }
    }

    NewtonResult fin = newton_polish(v, truncate_bounded(nl, opt.m_levels.back()), 1e-10);
    if (!fin.converged)
        throw NumericalError("sublinear final", "polish without perturbation failed, residual " +
                                                    std::to_string(fin.residual));
    rep.u = fin.u;
    rep.norm = rep.u.sup_norm();
    if (!(rep.norm < opt.m_levels.back()))
        throw NumericalError("sublinear final", "solution reaches the truncation level");
    rep.residual = equation_residual(rep.u, nl);
    rep.J = functional_J(rep.u, nl);
    rep.E = energy_E(rep.u);

    std::mt19937_64 rng(opt.seed);
    int n_scaled = opt.challenge / 2;
    auto cs = logspace(0.02, 20.0, std::max(n_scaled, 2));
    for (int k = 0; k < n_scaled; ++k) rep.challenge.push_back({"scaled_eigenfunction", cs[k], functional_J(scaled(eig.u1, cs[k]), nl)});
    while (static_cast<int>(rep.challenge.size()) < opt.challenge) {
        RadialFn w = random_psh(g, rng);
        rep.challenge.push_back({"random_psh", w.sup_norm(), functional_J(w, nl)});
    }
    rep.challenge_gap = kInfD;
    for (const auto& c : rep.challenge) rep.challenge_gap = std::min(rep.challenge_gap, c.J - rep.J);
    rep.converged = rep.residual <= opt.tol && rep.norm >= 1e-3 && rep.J < 0.0;
    return rep;
}

// ---------------------------------------------------------------------------------------------
// superlinear driver

EnergyProbe energy_control_probe(const RadialFn& u, const Nonlinearity& nl, double p) {
    if (!(p >= 1.0)) throw InvalidArgument("energy_control_probe: p must be >= 1");
    const RadialGrid& g = *u.grid;
    auto m = ma_rad(u);
    const int N = g.size();
    std::vector<double> diss(N, 0.0), bint(N, 0.0);
    EnergyProbe out;
    out.termwise_min = kInfD;
    for (int j = 0; j + 1 < N; ++j) {
        double a = m[j], b = nl.rhs(g.s[j], u.values[j]);
        double al = std::pow(a, 1.0 / p), be = std::pow(b, 1.0 / p);
        double gap = std::pow(std::abs(al - be), p + 1.0);
        diss[j] = gap;
        bint[j] = -u.values[j] * b;
        out.termwise_min = std::min(out.termwise_min, (a - b) * (al - be) - gap);
    }
    out.dissipation = integrate(g, diss);
    out.beta_integral = integrate(g, bint);
    out.E = energy_E(u);
    out.finite = std::isfinite(out.dissipation) && std::isfinite(out.beta_integral) && std::isfinite(out.E);
    return out;
}

namespace {

struct Trajectory {
    double sigma = 0.0;
    RadialFn v0;
    FlowState st;
    int fate = 0;   // -1 collapsed, +1 escaped, 0 undecided
    bool stopped = false;
    bool original = false;
    double best_ratio = kInfD;
    RadialFn best_v;
};

struct PathContext {
    const GridPtr& g;
    const FlowConfig& cfg;
    const Nonlinearity& nl_d;
    double r_low = 0.0, r_high = 0.0;
    double horizon = 0.0;
};

void classify(Trajectory& tr, const PathContext& ctx) {
    double nrm = tr.st.v.sup_norm();
    if (nrm > ctx.r_high) tr.fate = 1;
    else if (nrm < ctx.r_low) tr.fate = -1;
    if (tr.fate != 0) tr.stopped = true;
}

void advance(Trajectory& tr, const PathContext& ctx, double t_target) {
    while (!tr.stopped && tr.st.t < t_target - 1e-12 * std::max(1.0, t_target)) {
        step(tr.st, ctx.cfg, t_target - tr.st.t);
        double nrm = tr.st.v.sup_norm();
        if (nrm >= ctx.r_low && nrm <= ctx.r_high) {
            double ratio = tr.st.diag.sup_ut / tr.st.diag.M;
            if (ratio < tr.best_ratio) {
                tr.best_ratio = ratio;
                tr.best_v = tr.st.v;
            }
        }
        classify(tr, ctx);
    }
}

Trajectory start(double sigma, const RadialFn& v0, const PathContext& ctx) {
    Trajectory tr;
    tr.sigma = sigma;
    tr.v0 = v0;
    tr.st = make_flow_state(ctx.cfg, v0);
    classify(tr, ctx);
    return tr;
}

}  // namespace

std::string SuperlinearReport::to_json() const {
    nlohmann::json j;
    j["lambda1"] = lambda1;
    j["residual"] = residual;
    j["J"] = J;
    j["c"] = c;
    j["norm"] = norm;
    j["converged"] = converged;
    j["endpoints"] = {{"K", K_endpoint}, {"eps", eps_endpoint}, {"J_v0", J_v0}, {"J_v1", J_v1}};
    j["mountain"] = {{"theta", theta}, {"K_m", K_m}, {"sobolev_C", sobolev_C}, {"k_m", k_m}, {"c_lower", c_lower}};
    j["truncation"] = {{"m", truncation.m},
                       {"B", truncation.B},
                       {"delta_m", truncation.delta_m},
                       {"K_m", truncation.K_m},
                       {"p", truncation.p_trunc},
                       {"active", truncation.active}};
    j["mu_p"] = mu_p;
    j["T0c_max"] = T0c_max;
    for (const auto& s : stages) {
        j["cascade"].push_back({{"delta", s.delta},
                                {"a", s.a},
                                {"m_path", s.m_path},
                                {"path_sup_J0", s.path_sup_J0},
                                {"c_delta", s.c_delta},
                                {"saddle_residual", s.saddle_residual},
                                {"bisections", s.bisections},
                                {"s0_sigma", s.s0_sigma},
                                {"s0_time_in_I", s.s0_time_in_I},
                                {"T0c_measure", s.T0c_measure},
                                {"energy_K_emp", s.energy_K_emp},
                                {"probe_termwise_min", json_num(s.probe_termwise_min)},
                                {"endpoints_ok", s.endpoints_ok}});
    }
    j["validation"] = nlohmann::json::parse(validation.to_json());
    return j.dump(2);
}

SuperlinearReport run_superlinear(const Nonlinearity& nl, const GridPtr& g, double lambda1,
                                  const SuperlinearOptions& opt) {
    if (opt.m_path < 3) throw InvalidArgument("run_superlinear: m_path must be >= 3");
    if (opt.delta_levels.empty() || opt.a_fractions.size() < opt.delta_levels.size())
        throw InvalidArgument("run_superlinear: need one a fraction per delta level");
    const int n = g->n();
    if (nl.n != n) throw InvalidArgument("run_superlinear: nonlinearity and grid dimensions differ");
    SuperlinearReport rep;
    rep.lambda1 = lambda1;
    rep.validation = validate_superlinear(nl, lambda1);
    rep.theta = nl.theta;
    const double theta = nl.theta;

    rep.truncation = truncation_params(nl, std::max(rep.validation.M_emp, 8.0), 0.0);
    const int p = rep.truncation.p_trunc;
    Nonlinearity nl_m = truncate_polynomial(nl, rep.truncation);
    rep.mu_p = p;
    const MuFunction mu = MuFunction::build(p);

    EigenResult eig = eigen_inverse_iteration(g);

    // Psi_m <= (1 - theta) lambda^n |x|^{n+1}/(n+1) + K_m |x|^{p+1}
    for (double r : logspace(1e-4, 1e3, 3001)) {
        double ex = big_psi(nl_m, 0.5, -r) - (1.0 - theta) * std::pow(lambda1, n) * std::pow(r, n + 1) / (n + 1);
        rep.K_m = std::max(rep.K_m, ex / std::pow(r, p + 1.0));
    }
    std::mt19937_64 rng(opt.seed);
    rep.sobolev_C = sobolev_check(eig.u1, p + 1.0);
    for (int k = 0; k < opt.sobolev_samples; ++k) rep.sobolev_C = std::max(rep.sobolev_C, sobolev_check(random_psh(g, rng), p + 1.0));
    const double A = rep.K_m * std::pow(rep.sobolev_C, p + 1.0);
    const double qexp = (p + 1.0) / (n + 1.0);
    const double e_star = std::pow(theta * n / ((n + 1.0) * A), 1.0 / (qexp - 1.0));
    rep.k_m = std::pow(e_star, 1.0 / (n + 1));
    rep.c_lower = theta * e_star / (n + 1.0);

    // endpoints
    double K = 1.0;
    while (functional_J(scaled(eig.u1, K), nl_m) > -1.0) {
        K *= 2.0;
        if (K > 1e6) throw NumericalError("superlinear.endpoints", "J(K u1) stays above -1");
    }
    rep.K_endpoint = K;
    RadialFn v1 = scaled(eig.u1, K);
    for (int j = 0; j < g->size(); ++j) v1.values[j] += 1e-3 * (g->s[j] - 1.0);
    double eps = 0.5;
    while (!(energy_E(scaled(v1, eps)) < e_star && functional_J(scaled(v1, eps), nl_m) < rep.c_lower / 2.0)) {
        eps *= 0.5;
        if (eps < 1e-12) throw NumericalError("superlinear.endpoints", "no admissible v0 = eps v1");
    }
    rep.eps_endpoint = eps;
    RadialFn v0 = scaled(v1, eps);
    rep.J_v0 = functional_J(v0, nl_m);
    rep.J_v1 = functional_J(v1, nl_m);
    auto m0 = ma_raw(v0), m1 = ma_raw(v1);

    double c_first = kNaN;
    RadialFn u_prev;
    for (std::size_t di = 0; di < opt.delta_levels.size(); ++di) {
        const double delta = opt.delta_levels[di];
        Nonlinearity nl_d = boundary_perturbed(nl_m, delta);
        FlowConfig cfg;
        cfg.mu = mu;
        cfg.forcing = forcing_from_nonlinearity(nl_d, mu);
        cfg.energy = nl_d;
        cfg.dt_init = opt.dt_init;
        cfg.dt_max = opt.dt_max;
        cfg.steady_tol = -1.0;
        cfg.t_end = opt.horizon;

        auto seed_point = [&](double sigma) {
            std::vector<double> dens(g->size());
            for (int j = 0; j < g->size(); ++j) {
                dens[j] = (1.0 - sigma) * m0[j] + sigma * m1[j];
                if (opt.seed_path == 1) dens[j] += 4.0 * sigma * (1.0 - sigma) * m1[j] * g->s[j] * (1.0 - g->s[j]);
            }
            if (sigma == 0.0) dens = m0;
            if (sigma == 1.0) dens = m1;
            RadialFn w = invert_density(g, dens);
            return prepare_initial(w, cfg.forcing, mu, opt.blend_delta);
        };

        DeltaStage ds;
        ds.delta = delta;
        int m_path = opt.m_path;
        std::vector<Trajectory> trs;
        for (int attempt_no = 0;; ++attempt_no) {
            trs.clear();
            std::vector<RadialFn> pts;
            std::vector<double> J0;
            for (int k = 0; k < m_path; ++k) {
                pts.push_back(seed_point(static_cast<double>(k) / (m_path - 1)));
                J0.push_back(functional_J(pts.back(), nl_d));
            }
            int kmax = static_cast<int>(std::max_element(J0.begin(), J0.end()) - J0.begin());
            if ((kmax <= 2 || kmax >= m_path - 3) && attempt_no < opt.max_refinements) {
                m_path = 2 * m_path - 1;
                continue;
            }
            ds.path_sup_J0 = J0[kmax];
            double rstar = pts[kmax].sup_norm();
            PathContext ctx{g, cfg, nl_d, 0.3 * rstar, 3.0 * rstar, opt.horizon};
            for (int k = 0; k < m_path; ++k) {
                trs.push_back(start(static_cast<double>(k) / (m_path - 1), pts[k], ctx));
                trs.back().original = true;
            }
            // lockstep evolution of the path with barriers
            ds.path_J.clear();
            ds.endpoints_ok = true;
            for (double tb = 0.0;; tb += opt.barrier) {
                std::vector<double> Js;
                for (auto& tr : trs) {
                    advance(tr, ctx, tb);
                    Js.push_back(tr.stopped && tr.st.t < tb - 1e-9 ? kNaN : tr.st.diag.J);
                }
                ds.path_J.emplace_back(tb, Js);
                bool all = std::all_of(trs.begin(), trs.end(), [](const Trajectory& t) { return t.stopped; });
                if (all || tb >= opt.horizon) break;
            }
            // bisection on the path parameter between opposite fates
            auto find_pair = [&]() -> int {
                for (std::size_t k = 0; k + 1 < trs.size(); ++k)
                    if (trs[k].fate == -1 && trs[k + 1].fate == 1) return static_cast<int>(k);
                return -1;
            };
            bool undecided = std::any_of(trs.begin(), trs.end(), [](const Trajectory& t) { return t.fate == 0; });
            int k = find_pair();
            if (k < 0 && !undecided) {
                if (attempt_no < opt.max_refinements) {
                    m_path = 2 * m_path - 1;
                    continue;
                }
                throw NumericalError("superlinear.path", "I_t empties: no path point separates the two basins (delta = " +
                                                             std::to_string(delta) + ")");
            }
            while (k >= 0 && ds.bisections < opt.max_bisections && !undecided) {
                double sm = 0.5 * (trs[k].sigma + trs[k + 1].sigma);
                if (!(sm > trs[k].sigma && sm < trs[k + 1].sigma)) break;
                Trajectory tr = start(sm, seed_point(sm), ctx);
                advance(tr, ctx, opt.horizon);
                undecided = tr.fate == 0;
                trs.insert(trs.begin() + k + 1, std::move(tr));
                ++ds.bisections;
                k = find_pair();
            }
            break;
        }
        ds.m_path = m_path;

        // saddle: the most stationary snapshot between the basins, then a static polish
        const Trajectory* best = nullptr;
        for (const auto& tr : trs)
            if (!tr.best_v.values.empty() && (!best || tr.best_ratio < best->best_ratio)) best = &tr;
        if (!best) throw NumericalError("superlinear.saddle", "no snapshot between the basins");
        NewtonResult nr = newton_polish(best->best_v, nl_d, 1e-10);
        if (!nr.converged)
            throw NumericalError("superlinear.saddle", "polish failed at delta = " + std::to_string(delta) +
                                                           ", residual " + std::to_string(nr.residual));
        ds.saddle_residual = nr.residual;
        ds.c_delta = functional_J(nr.u, nl_d);
        u_prev = nr.u;
        if (di == 0) c_first = ds.c_delta;
        ds.a = opt.a_fractions[di] * c_first;

        ds.path.a = ds.a;
        ds.path.c_estimate = -kInfD;
        for (std::size_t k = 0; k < trs.size(); ++k) {
            if (!trs[k].original) continue;
            ds.path.sigma.push_back(trs[k].sigma);
            ds.path.points.push_back(trs[k].st.v);
            ds.path.c_estimate = std::max(ds.path.c_estimate, trs[k].st.diag.J);
            if (trs[k].st.diag.J >= ds.c_delta - ds.a) ds.path.good_set.push_back(static_cast<int>(ds.path.sigma.size()) - 1);
        }

        // I_t bookkeeping over every trajectory
        int s0 = -1;
        double best_time = -1.0;
        for (std::size_t k = 0; k < trs.size(); ++k) {
            const auto& h = trs[k].st.history;
            double tin = 0.0;
            for (std::size_t i = 1; i < h.size(); ++i)
                if (h[i].J >= ds.c_delta - ds.a) tin += h[i].t - h[i - 1].t;
            if (tin > best_time) {
                best_time = tin;
                s0 = static_cast<int>(k);
            }
        }
        const Trajectory& tr0 = trs[s0];
        ds.s0_sigma = tr0.sigma;
        ds.s0_time_in_I = best_time;
        const auto& h = tr0.st.history;
        std::size_t i_a = 0;
        while (i_a < h.size() && h[i_a].J > ds.c_delta + ds.a) ++i_a;
        std::size_t i_l = i_a;
        while (i_l + 1 < h.size() && h[i_l + 1].J >= ds.c_delta - ds.a) ++i_l;
        std::vector<char> good(h.size(), 0);
        for (std::size_t i = i_a + 1; i <= i_l && i < h.size(); ++i) {
            double rate = (h[i].J - h[i - 1].J) / (h[i].t - h[i - 1].t);
            if (rate < -ds.a) ds.T0c_measure += h[i].t - h[i - 1].t;
            else good[i] = 1;
        }
        // replay s0 to probe the energies at good times
        {
            FlowState st = make_flow_state(cfg, tr0.v0);
            ds.probe_termwise_min = kInfD;
            std::size_t i = 0;
            while (i < i_l && i + 1 < h.size()) {
                step(st, cfg, h[i + 1].t - st.t);
                i = st.history.size() - 1;
                if (i < good.size() && good[i]) {
                    EnergyProbe pr = energy_control_probe(st.v, nl_d, p);
                    ds.energy_K_emp = std::max({ds.energy_K_emp, pr.E, pr.beta_integral});
                    ds.probe_termwise_min = std::min(ds.probe_termwise_min, pr.termwise_min);
                }
                if (st.t >= h[i_l].t - 1e-12) break;
            }
        }
        // endpoint invariants along the recorded flow
        const auto& e0 = trs.front().st.history;
        const auto& e1 = trs.back().st.history;
        for (const auto& d : e0) ds.endpoints_ok = ds.endpoints_ok && d.J < rep.c_lower / 2.0 + 1e-12 && d.ma_min > 0.0;
        for (const auto& d : e1) ds.endpoints_ok = ds.endpoints_ok && d.J < -0.5 && d.ma_min > 0.0;
        rep.T0c_max = std::max(rep.T0c_max, ds.T0c_measure);
        rep.stages.push_back(std::move(ds));
    }

    NewtonResult fin = newton_polish(u_prev, nl_m, 1e-10);
    if (!fin.converged)
        throw NumericalError("superlinear.final", "polish without perturbation failed, residual " +
                                                      std::to_string(fin.residual));
    rep.u = fin.u;
    rep.norm = rep.u.sup_norm();
    rep.residual = equation_residual(rep.u, nl);
    rep.J = functional_J(rep.u, nl);
    rep.c = rep.J;
    if (!(rep.norm < rep.truncation.m))
        throw NumericalError("superlinear.final", "solution reaches the truncation level m");
    rep.converged = rep.residual <= opt.tol && rep.c > 0.0 && rep.norm > 0.0;
    return rep;
}

void write_path_csv(const std::string& path, const DeltaStage& st, const std::string& header_comment) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open " + path);
    if (!header_comment.empty()) {
        std::istringstream in(header_comment);
        std::string line;
        while (std::getline(in, line)) os << "# " << line << '\n';
    }
    std::size_t cols = st.path_J.empty() ? 0 : st.path_J.front().second.size();
    os << "t";
    for (std::size_t k = 0; k < cols; ++k) os << ",J_" << k;
    os << '\n' << std::setprecision(17);
    for (const auto& [t, Js] : st.path_J) {
        os << t;
        for (double J : Js) {
            os << ',';
            if (std::isfinite(J)) os << J;
        }
        os << '\n';
    }
}

}  // namespace cmalab
