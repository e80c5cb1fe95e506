#include "cmalab/ma_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "cmalab/error.hpp"
#include "cmalab/functionals.hpp"
#include "cmalab/ma_operator.hpp"

namespace cmalab {

RadialFn solve_radial_ma(const GridPtr& g, const std::vector<double>& density) {
    return flux_formula_inverse(g, density);
}

namespace {

RadialFn normalized(RadialFn v) {
    double m = v.min();
    if (!(m < 0.0)) throw NumericalError("eigen", "iterate vanished");
    for (double& x : v.values) x /= -m;
    return v;
}

double powabs(double x, int n) { return std::pow(std::abs(x), n); }

RadialFn initial_guess(const GridPtr& g, const RadialFn* guess) {
    if (guess) {
        if (guess->grid->size() != g->size()) throw InvalidArgument("eigen: initial guess on a different grid");
        return normalized(RadialFn(g, guess->values));
    }
    return sample(g, [](double s) { return s - 1.0; });
}

}  // namespace

double eigen_residual(const RadialFn& u, double lambda) {
    auto m = ma_raw(u);
    const int n = u.grid->n();
    double r = 0.0;
    for (int j = 0; j + 1 < u.size(); ++j) r = std::max(r, std::abs(m[j] - powabs(lambda * u.values[j], n)));
    return r;
}

EigenResult eigen_inverse_iteration(const GridPtr& g, double tol, int max_iter, const RadialFn* guess) {
    if (!(tol > 0.0)) throw InvalidArgument("eigen_inverse_iteration: tol must be positive");
    const int n = g->n();
    EigenResult res;
    res.method = "inverse_iteration";
    RadialFn u = initial_guess(g, guess);
    double lam = std::pow(rayleigh(u), 1.0 / n);
    for (int k = 1; k <= max_iter; ++k) {
        std::vector<double> rhs(g->size());
        for (int j = 0; j < g->size(); ++j) rhs[j] = powabs(lam * u.values[j], n);
        u = normalized(invert_density(g, rhs));
        double R = rayleigh(u);
        double lam_new = std::pow(R, 1.0 / n);
        res.rayleigh_history.push_back(R);
        res.iterations = k;
        res.residual = eigen_residual(u, lam_new);
        bool done = std::abs(lam_new - lam) <= tol * lam && res.residual <= 100.0 * tol;
        lam = lam_new;
        if (done) {
            res.converged = true;
            break;
        }
    }
    res.lambda1 = lam;
    res.u1 = u;
    if (!res.converged)
        throw NumericalError("eigen_inverse_iteration",
                             "no convergence after " + std::to_string(max_iter) + " iterations, residual " +
                                 std::to_string(res.residual));
    return res;
}

EigenResult eigen_rayleigh_descent(const GridPtr& g, double tol, int max_iter, const RadialFn* guess) {
    if (!(tol > 0.0)) throw InvalidArgument("eigen_rayleigh_descent: tol must be positive");
    const int n = g->n(), N = g->size();
    const double c = g->domain.vol_const;
    EigenResult res;
    res.method = "rayleigh_descent";
    RadialFn v = initial_guess(g, guess);
    double R = rayleigh(v);
    double lam = std::pow(R, 1.0 / n);
    res.residual = eigen_residual(v, lam);
    if (res.residual <= 100.0 * tol) {
        res.converged = true;
        res.lambda1 = lam;
        res.u1 = v;
        res.rayleigh_history.push_back(R);
        return res;
    }
    for (int k = 1; k <= max_iter; ++k) {
        auto m = ma_raw(v);
        double I = energy_I(v);
        std::vector<double> r(N - 1), d(N - 1);
        for (int j = 0; j + 1 < N; ++j) {
            r[j] = m[j] - R * powabs(v.values[j], n);
            d[j] = -r[j];
        }
        BandMatrix J = ma_jacobian(v);
        if (J.solve_in_place(d) != 0) d.assign(r.begin(), r.end());
        double gd = 0.0;
        for (int j = 0; j + 1 < N; ++j) gd += -c * g->quad[j] * r[j] / I * d[j];
        if (!(gd < 0.0)) {
            for (int j = 0; j + 1 < N; ++j) d[j] = r[j] * (g->quad[j] > 0 ? 1.0 : 0.0);
            gd = 0.0;
            for (int j = 0; j + 1 < N; ++j) gd += -c * g->quad[j] * r[j] / I * d[j];
        }
        double alpha = 1.0;
        bool accepted = false;
        RadialFn trial;
        double R_trial = R;
        for (int ls = 0; ls < 50; ++ls, alpha *= 0.5) {
            RadialFn cand = v;
            for (int j = 0; j + 1 < N; ++j) cand.values[j] += alpha * d[j];
            try {
                cand = psh_project(cand, 0.0);
                if (!(cand.min() < 0.0)) continue;
                double Rc = rayleigh(cand);
                if (Rc <= R - 1e-4 * alpha * std::abs(gd)) {
                    trial = normalized(cand);
                    R_trial = Rc;
                    accepted = true;
                    break;
                }
            } catch (const Error&) {
                continue;
            }
        }
        res.iterations = k;
        if (!accepted) {
            // No decrease is resolvable in floating point once |gd| is at rounding level of R:
            // the minimizer is reached to machine precision in E/I.
            if (std::abs(gd) <= 1e-12 * R) {
                res.rounding_limited = true;
                res.residual = eigen_residual(v, lam);
                res.converged = true;
            }
            break;
        }
        v = trial;
        double lam_new = std::pow(R_trial, 1.0 / n);
        R = R_trial;
        res.rayleigh_history.push_back(R);
        res.residual = eigen_residual(v, lam_new);
        bool done = std::abs(lam_new - lam) <= tol * lam && res.residual <= 100.0 * tol;
        lam = lam_new;
        if (done) {
            res.converged = true;
            break;
        }
    }
    res.lambda1 = lam;
    res.u1 = v;
    if (!res.converged) {
        res.residual = eigen_residual(v, lam);
        if (res.residual <= 100.0 * tol) {
            res.converged = true;
        } else {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.3e", res.residual);
            throw NumericalError("eigen_rayleigh_descent",
                                 "no convergence after " + std::to_string(res.iterations) + " iterations, residual " + buf);
        }
    }
    return res;
}

ComparisonVerdict comparison_check(const RadialFn& v1, const RadialFn& v2) {
    if (v1.grid->size() != v2.grid->size()) throw InvalidArgument("comparison_check: grids differ");
    ComparisonVerdict out;
    out.equal = v1.values == v2.values;
    auto m1 = ma_rad(v1), m2 = ma_rad(v2);
    out.premise = true;
    for (int j = 0; j + 1 < v1.size(); ++j)
        if (m1[j] < m2[j]) out.premise = false;
    double slack = 10.0 * v1.grid->h_max * v1.grid->h_max;
    out.max_excess = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < v1.size(); ++j) out.max_excess = std::max(out.max_excess, v1.values[j] - v2.values[j]);
    out.conclusion = out.max_excess <= slack;
    return out;
}

std::vector<double> rigidity_iteration(const GridPtr& g, double lambda1, double theta, int steps) {
    const int n = g->n();
    RadialFn u = sample(g, [](double s) { return s - 1.0; });
    std::vector<double> norms{u.sup_norm()};
    double k = (1.0 - theta) * lambda1;
    for (int i = 0; i < steps; ++i) {
        std::vector<double> rhs(g->size());
        for (int j = 0; j < g->size(); ++j) rhs[j] = powabs(k * u.values[j], n);
        u = invert_density(g, rhs);
        norms.push_back(u.sup_norm());
    }
    return norms;
}

}  // namespace cmalab
