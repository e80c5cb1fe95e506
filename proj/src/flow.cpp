#include "cmalab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "cmalab/error.hpp"
#include "cmalab/ma_operator.hpp"

namespace cmalab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double smooth_step(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return 1.0 / (1.0 + std::exp(1.0 / x - 1.0 / (1.0 - x)));
}

struct Attempt {
    bool ok = false;
    std::string why;
    RadialFn v;
    int iterations = 0;
    std::vector<double> f_old;
};

double sup_abs(const std::vector<double>& x) {
    double m = 0.0;
    for (double t : x) m = std::max(m, std::abs(t));
    return m;
}

Attempt attempt(const RadialFn& v_old, double t, double dt, const FlowConfig& cfg) {
    const RadialGrid& g = *v_old.grid;
    const int N = g.size(), M = N - 1;
    Attempt out;
    out.f_old.resize(M);
    for (int j = 0; j < M; ++j) {
        out.f_old[j] = cfg.forcing.f(g.s[j], t, v_old.values[j]);
        if (!std::isfinite(out.f_old[j])) throw NumericalError("flow.step", "non-finite forcing at node " + std::to_string(j));
    }
    RadialFn v = v_old;
    auto residual = [&](const RadialFn& w, std::vector<double>& m, std::vector<double>& G) {
        m = ma_raw(w);
        G.resize(M);
        for (int j = 0; j < M; ++j) {
            if (!(m[j] > 0.0)) return false;
            G[j] = cfg.mu(m[j]) - (w.values[j] - v_old.values[j]) / dt - out.f_old[j];
        }
        return true;
    };
    std::vector<double> m, G, mt, Gt;
    if (!residual(v, m, G)) {
        out.why = "initial state has non-positive MA";
        return out;
    }
    double norm = sup_abs(G);
    const double vscale = 1.0 + v_old.sup_norm();
    for (int it = 0; it < 40; ++it) {
        double tol = cfg.newton_tol + 8.0 * std::numeric_limits<double>::epsilon() * vscale / dt;
        if (norm <= tol) {
            out.ok = true;
            out.iterations = it;
            break;
        }
        BandMatrix J = ma_jacobian(v);
        for (int i = 0; i < M; ++i) {
            double mp = cfg.mu.d1(m[i]);
            for (int k = std::max(0, i - J.kl()); k <= std::min(M - 1, i + J.ku()); ++k) J(i, k) *= mp;
            J(i, i) -= 1.0 / dt;
        }
        std::vector<double> d(G.size());
        for (int j = 0; j < M; ++j) d[j] = -G[j];
        if (J.solve_in_place(d) != 0) {
            out.why = "singular Newton matrix";
            return out;
        }
        double lam = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, lam *= 0.5) {
            RadialFn w = v;
            for (int j = 0; j < M; ++j) w.values[j] += lam * d[j];
            if (!residual(w, mt, Gt)) continue;
            double nt = sup_abs(Gt);
            if (nt < norm) {
                v = std::move(w);
                m.swap(mt);
                G.swap(Gt);
                norm = nt;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // Converged to rounding: no decrease possible but the update is negligible.
            if (sup_abs(d) <= 1e-13 * vscale) {
                out.ok = true;
                out.iterations = it + 1;
                break;
            }
            out.why = "line search failed";
            return out;
        }
        out.iterations = it + 1;
    }
    if (!out.ok) {
        out.why = "Newton did not converge";
        return out;
    }
    double change = 0.0;
    for (int j = 0; j < N; ++j) change = std::max(change, std::abs(v.values[j] - v_old.values[j]));
    if (change > cfg.cfl_safety * std::max(v_old.sup_norm(), 0.1)) {
        out.ok = false;
        out.why = "update exceeds cfl_safety";
        return out;
    }
    out.v = std::move(v);
    return out;
}

void fill_diagnostics(FlowDiagnostics& d, const RadialFn& v, const FlowConfig& cfg) {
    const int M = v.size() - 1;
    auto m = ma_raw(v);
    d.ma_min = std::numeric_limits<double>::infinity();
    d.ma_max = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < M; ++j) {
        d.ma_min = std::min(d.ma_min, m[j]);
        d.ma_max = std::max(d.ma_max, m[j]);
    }
    d.u_min = v.min();
    d.M = v.sup_norm() + 1.0;
    d.J = cfg.energy ? functional_J(v, *cfg.energy) : kNaN;
}

void commit(FlowState& st, Attempt& a, double dt, const FlowConfig& cfg) {
    const RadialGrid& g = *st.v.grid;
    const int M = g.size() - 1;
    RadialFn v_old = st.v;
    double t_new = st.t + dt;
    RadialFn v_new = psh_project(a.v, cfg.psh_floor * std::exp(-t_new));
    FlowDiagnostics d;
    d.t = t_new;
    d.dt = dt;
    d.newton_iterations = a.iterations;
    d.projected = v_new.values != a.v.values;
    double sup_ut = 0.0;
    for (int j = 0; j < g.size(); ++j) sup_ut = std::max(sup_ut, std::abs(v_new.values[j] - v_old.values[j]) / dt);
    d.sup_ut = sup_ut;
    fill_diagnostics(d, v_new, cfg);

    auto m = ma_raw(v_new);
    const double ip = cfg.mu.is_log() ? 0.0 : 1.0 / cfg.mu.p();
    std::vector<double> terms(g.size(), 0.0);
    d.dissipation_min = std::numeric_limits<double>::infinity();
    d.slope_chain_min = std::numeric_limits<double>::infinity();
    for (int j = 0; j < M; ++j) {
        double b = cfg.forcing.density ? cfg.forcing.density(g.s[j], st.t, v_old.values[j]) : cfg.mu.inverse(a.f_old[j]);
        double am = m[j];
        if (!(am > 0.0) || !(b > 0.0)) continue;
        double term = (cfg.mu(am) - cfg.mu(b)) * (am - b);
        terms[j] = term;
        d.dissipation_min = std::min(d.dissipation_min, term);
        if (!cfg.mu.is_log())
            d.slope_chain_min = std::min(d.slope_chain_min, term - (std::pow(am, ip) - std::pow(b, ip)) * (am - b));
    }
    if (cfg.mu.is_log()) d.slope_chain_min = 0.0;
    d.dissipation = integrate(g, terms);
    st.t = t_new;
    st.v = std::move(v_new);
    st.diag = d;
    st.history.push_back(d);
}

std::string dump(const FlowState& st) {
    std::ostringstream os;
    os << std::setprecision(6) << "t=" << st.t << " dt=" << st.dt << " u_min=" << st.diag.u_min
       << " ma_min=" << st.diag.ma_min << " ma_max=" << st.diag.ma_max << " sup_ut=" << st.diag.sup_ut;
    return os.str();
}

}  // namespace

Forcing forcing_from_nonlinearity(const Nonlinearity& nl, const MuFunction& mu) {
    Forcing F;
    F.name = "mu(" + nl.name + ")";
    auto rhs = nl.rhs, rhs_dx = nl.rhs_dx;
    F.f = [rhs, mu](double s, double, double x) { return mu(rhs(s, x)); };
    F.f_dx = [rhs, rhs_dx, mu](double s, double, double x) { return mu.d1(rhs(s, x)) * rhs_dx(s, x); };
    F.density = [rhs](double s, double, double x) { return rhs(s, x); };
    return F;
}

Forcing eigen_forcing(int n, double lambda, const MuFunction& mu, double kappa) {
    if (!(lambda > 0.0) || kappa < 0.0) throw InvalidArgument("eigen_forcing: need lambda > 0 and kappa >= 0");
    Forcing F;
    F.name = "eigen";
    double ln = std::pow(lambda, n);
    auto b = [ln, n, kappa](double x) { return ln * std::pow(std::abs(x), n) + kappa; };
    F.f = [b, mu](double, double, double x) { return mu(b(x)); };
    F.f_dx = [b, mu, ln, n](double, double, double x) {
        if (x > 0.0) return 0.0;
        return -mu.d1(b(x)) * ln * n * std::pow(-x, n - 1);
    };
    F.density = [b](double, double, double x) { return b(x); };
    if (mu.is_log() && kappa >= 1.0) {
        // log(kappa + y^n) <= log kappa + n log(1 + y) <= log kappa + n y
        F.K1 = std::log(kappa);
        F.K2 = n * lambda;
    } else if (n == 1 && kappa > 0.0) {
        // mu is concave
        F.K1 = std::abs(mu(kappa));
        F.K2 = mu.d1(kappa) * lambda;
    }
    if (n == 1 && kappa > 0.0) F.K3 = mu.d1(kappa) * lambda;
    return F;
}

Forcing constant_forcing(double c) {
    Forcing F;
    F.name = "constant";
    F.f = [c](double, double, double) { return c; };
    F.f_dx = [](double, double, double) { return 0.0; };
    F.K1 = std::abs(c);
    F.K2 = 0.0;
    F.K3 = 0.0;
    return F;
}

double forcing_lipschitz(const Forcing& f, const RadialGrid& g, double M0, int samples) {
    double K = 0.0;
    int stride = std::max(1, g.size() / 64);
    for (int j = 0; j < g.size(); j += stride) {
        for (int k = 0; k < samples; ++k) {
            double x = -M0 * k / (samples - 1);
            double d = std::abs(f.f_dx(g.s[j], 0.0, x));
            if (std::isfinite(d)) K = std::max(K, d);
        }
    }
    return K;
}

FlowState make_flow_state(const FlowConfig& cfg, const RadialFn& v0) {
    if (!(cfg.dt_init > 0.0) || cfg.dt_init > cfg.dt_max) throw InvalidArgument("flow: need 0 < dt_init <= dt_max");
    if (!(cfg.psh_floor > 0.0)) throw InvalidArgument("flow: psh_floor must be positive");
    if (!(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0)) throw InvalidArgument("flow: cfl_safety must lie in (0, 1]");
    if (v0.values.back() != 0.0) throw InvalidArgument("flow: initial data must vanish at s = 1");
    if (v0.min() > 0.0 || *std::max_element(v0.values.begin(), v0.values.end()) > 0.0)
        throw InvalidArgument("flow: initial data must be <= 0");
    FlowState st;
    st.t = 0.0;
    st.dt = cfg.dt_init;
    st.v = v0;
    st.diag.t = 0.0;
    fill_diagnostics(st.diag, v0, cfg);
    st.history.push_back(st.diag);
    return st;
}

void step(FlowState& st, const FlowConfig& cfg, double dt_cap) {
    const double base = st.dt;
    double dt = dt_cap > 0.0 ? std::min(base, dt_cap) : base;
    bool capped = dt < base;
    for (;;) {
        Attempt a = attempt(st.v, st.t, dt, cfg);
        if (a.ok) {
            commit(st, a, dt, cfg);
            if (capped)
                st.dt = base;
            else
                st.dt = a.iterations <= 4 ? std::min(1.5 * dt, cfg.dt_max) : dt;
            return;
        }
        ++st.rejected;
        dt *= 0.5;
        capped = false;
        st.dt = dt;
        if (dt < 1e-12) throw NumericalError("flow.step", "dt underflow (" + a.why + "); " + dump(st));
    }
}

bool advance_to(FlowState& st, const FlowConfig& cfg, double t_target) {
    long steps = 0;
    while (st.t < t_target - 1e-12 * std::max(1.0, t_target)) {
        if (steps++ >= cfg.max_steps) return false;
        step(st, cfg, t_target - st.t);
        if (st.diag.sup_ut <= cfg.steady_tol) {
            st.steady = true;
            break;
        }
    }
    return true;
}

FlowState run(const FlowConfig& cfg, const RadialFn& v0) {
    FlowState st = make_flow_state(cfg, v0);
    advance_to(st, cfg, cfg.t_end);
    return st;
}

RadialFn prepare_initial(const RadialFn& v_raw, const Forcing& f, const MuFunction& mu, double blend_delta) {
    if (!(blend_delta > 0.0 && blend_delta < 0.25)) throw InvalidArgument("prepare_initial: blend_delta must lie in (0, 0.25)");
    if (std::abs(v_raw.values.back()) > 1e-12) throw InvalidArgument("prepare_initial: v_raw(1) must be 0");
    const RadialGrid& g = *v_raw.grid;
    auto m = ma_rad(v_raw);
    std::vector<double> dens(g.size());
    for (int j = 0; j < g.size(); ++j) {
        double chi = smooth_step((g.s[j] - (1.0 - 2.0 * blend_delta)) / blend_delta);
        double target = 0.0;
        if (chi > 0.0) {
            double y = 0.0;
            try {
                y = f.f(g.s[j], 0.0, 0.0);
            } catch (const InvalidArgument& e) {
                throw NumericalError("prepare_initial", std::string("forcing undefined at u = 0: ") + e.what());
            }
            try {
                target = mu.inverse(y);
            } catch (const InvalidArgument&) {
                throw NumericalError("prepare_initial", "mu^{-1} out of range for f = " + std::to_string(y));
            }
        }
        dens[j] = (1.0 - chi) * m[j] + chi * target;
    }
    return invert_density(v_raw.grid, dens);
}

double compatibility_residual(const RadialFn& v, const Forcing& f, const MuFunction& mu) {
    const RadialGrid& g = *v.grid;
    auto m = ma_raw(v);
    const int N = g.size();
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
        int j = N - 5 + k;
        double w = 1.0;
        for (int l = 0; l < 4; ++l)
            if (l != k) w *= (1.0 - g.s[N - 5 + l]) / (g.s[j] - g.s[N - 5 + l]);
        acc += w * m[j];
    }
    if (!(acc > 0.0)) return std::numeric_limits<double>::infinity();
    return std::abs(mu(acc) - f.f(1.0, 0.0, 0.0));
}

double uniform_lower_bound(const FlowConfig& cfg, int n, double u0_norm, double t) {
    const auto& F = cfg.forcing;
    if (!std::isfinite(F.K1) || !std::isfinite(F.K2)) return -std::numeric_limits<double>::infinity();
    if (F.K2 > 0.0) return -(u0_norm + F.K1 / F.K2) * std::exp(F.K2 * t);
    double A = std::pow(cfg.mu.inverse(F.K1), 1.0 / n);
    return -u0_norm - A;
}

StabilityReport stability_pair(const FlowConfig& cfg, const RadialFn& a, const RadialFn& b, double T) {
    if (!(T > 0.0)) throw InvalidArgument("stability_pair: T must be positive");
    const RadialGrid& g = *a.grid;
    StabilityReport rep;
    rep.T = T;
    rep.slack = 100.0 * g.h_max * g.h_max;
    double u0 = std::max(a.sup_norm(), b.sup_norm());
    double M0 = -uniform_lower_bound(cfg, g.n(), u0, T);
    if (!std::isfinite(M0)) throw InvalidArgument("stability_pair: the forcing carries no growth bounds K1, K2");
    rep.K = forcing_lipschitz(cfg.forcing, g, M0);
    FlowState sa = make_flow_state(cfg, a), sb = make_flow_state(cfg, b);
    for (int j = 0; j < g.size(); ++j) rep.initial_gap = std::max(rep.initial_gap, std::abs(a.values[j] - b.values[j]));
    rep.sup_gap = rep.initial_gap;
    double dt = cfg.dt_init;
    while (sa.t < T - 1e-12 * std::max(1.0, T)) {
        double h = std::min(dt, T - sa.t);
        Attempt A = attempt(sa.v, sa.t, h, cfg);
        Attempt B = A.ok ? attempt(sb.v, sb.t, h, cfg) : Attempt{};
        if (!A.ok || !B.ok) {
            dt *= 0.5;
            if (dt < 1e-12) throw NumericalError("stability_pair", "dt underflow");
            continue;
        }
        commit(sa, A, h, cfg);
        commit(sb, B, h, cfg);
        ++rep.steps;
        double gap = 0.0;
        for (int j = 0; j < g.size(); ++j) gap = std::max(gap, std::abs(sa.v.values[j] - sb.v.values[j]));
        rep.sup_gap = std::max(rep.sup_gap, gap);
        if (std::max(A.iterations, B.iterations) <= 4) dt = std::min(1.5 * dt, cfg.dt_max);
    }
    rep.bound = std::exp(rep.K * T) * rep.initial_gap;
    return rep;
}

MonitorReport monitors(const FlowState& st, const FlowConfig& cfg) {
    MonitorReport r;
    r.ma_min = std::numeric_limits<double>::infinity();
    const double p = cfg.mu.is_log() ? 0.0 : cfg.mu.p();
    for (std::size_t k = 1; k < st.history.size(); ++k) {
        const auto& d = st.history[k];
        r.ut_over_M = std::max(r.ut_over_M, d.sup_ut / d.M);
        r.ma_min = std::min(r.ma_min, d.ma_min);
        r.ma_over_Mp = std::max(r.ma_over_Mp, d.ma_max / std::pow(d.M, p));
    }
    if (st.history.size() <= 1) r.ma_min = st.diag.ma_min;
    r.finite = std::isfinite(r.ut_over_M) && std::isfinite(r.ma_min) && std::isfinite(r.ma_over_Mp);
    return r;
}

void write_trajectory_csv(const std::string& path, const FlowState& st, const std::string& header_comment) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open " + path);
    if (!header_comment.empty()) {
        std::istringstream in(header_comment);
        std::string line;
        while (std::getline(in, line)) os << "# " << line << '\n';
    }
    os << "t,J,sup_ut,ma_min,ma_max,u_min\n" << std::setprecision(17);
    for (const auto& d : st.history)
        os << d.t << ',' << d.J << ',' << d.sup_ut << ',' << d.ma_min << ',' << d.ma_max << ',' << d.u_min << '\n';
}

}  // namespace cmalab
