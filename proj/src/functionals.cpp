#include "cmalab/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "cmalab/error.hpp"
#include "cmalab/ma_operator.hpp"
#include "cmalab/quadrature.hpp"

namespace cmalab {

std::string to_string(GrowthClass g) {
    switch (g) {
        case GrowthClass::eigen: return "eigen";
        case GrowthClass::sublinear: return "sublinear";
        case GrowthClass::superlinear: return "superlinear";
        case GrowthClass::custom: return "custom";
    }
    return "custom";
}

double Nonlinearity::psi(double s, double x) const {
    double r = rhs(s, x);
    return n == 1 ? r : std::pow(std::max(r, 0.0), 1.0 / n);
}

double Nonlinearity::psi_dx(double s, double x) const {
    if (n == 1) return rhs_dx(s, x);
    double p = psi(s, x);
    if (p <= 0.0) return 0.0;
    return rhs_dx(s, x) / (n * std::pow(p, n - 1));
}

Nonlinearity make_eigen_nonlinearity(int n, double lambda) {
    if (!(lambda > 0.0)) throw InvalidArgument("eigen nonlinearity: lambda must be positive");
    Nonlinearity nl;
    nl.n = n;
    nl.name = "eigen";
    nl.growth = GrowthClass::eigen;
    double ln = std::pow(lambda, n);
    nl.rhs = [ln, n](double, double x) { return ln * std::pow(std::abs(x), n); };
    nl.rhs_dx = [ln, n](double, double x) { return x < 0 ? -ln * n * std::pow(-x, n - 1) : 0.0; };
    nl.Psi = [ln, n](double, double x) { return ln * std::pow(std::abs(x), n + 1) / (n + 1); };
    nl.theta = 0.0;
    return nl;
}

Nonlinearity perturbed(const Nonlinearity& nl, double eps) {
    if (eps < 0.0) throw InvalidArgument("perturbation must be nonnegative");
    Nonlinearity out = nl;
    out.name = nl.name + "+eps";
    auto base = nl.rhs;
    out.rhs = [base, eps](double s, double x) { return base(s, x) + eps; };
    if (nl.Psi) {
        auto P = nl.Psi;
        out.Psi = [P, eps](double s, double x) { return P(s, x) + eps * std::abs(x); };
    }
    return out;
}

double big_psi_quadrature(const Nonlinearity& nl, double s, double x) {
    if (x > 1e-12) throw InvalidArgument("big_psi: x must be <= 0");
    if (x >= 0.0) return 0.0;
    auto r = adaptive_simpson([&](double y) { return nl.rhs(s, y); }, x, 0.0, 1e-8, 1e-300);
    if (!r.converged)
        throw NumericalError("big_psi", "adaptive quadrature did not converge on [" + std::to_string(x) + ", 0]");
    return r.value;
}

double big_psi(const Nonlinearity& nl, double s, double x) {
    if (x > 1e-12) throw InvalidArgument("big_psi: x must be <= 0");
    if (x >= 0.0) return 0.0;
    if (nl.Psi) return nl.Psi(s, x);
    return big_psi_quadrature(nl, s, x);
}

std::vector<double> ma_rad(const RadialFn& v) {
    auto m = ma_raw(v);
    const int last = static_cast<int>(m.size()) - 1;
    for (int j = 0; j < last; ++j) {
        if (m[j] < -kNegTol) throw ConeViolation("ma_rad: density below tolerance", j, m[j]);
        if (m[j] < 0.0) m[j] = 0.0;
    }
    // The boundary node carries the Dirichlet condition, not the equation; its one-sided
    // estimate is only clamped.
    m[last] = std::max(m[last], 0.0);
    return m;
}

double energy_E(const RadialFn& v) {
    auto m = ma_rad(v);
    const int n = v.grid->n();
    std::vector<double> f(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) f[j] = -v.values[j] * m[j];
    return integrate(*v.grid, f) / (n + 1);
}

double energy_I(const RadialFn& v) {
    const int n = v.grid->n();
    std::vector<double> f(v.values.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
        if (v.values[j] > 1e-12) throw InvalidArgument("energy_I: potential must be <= 0");
        f[j] = std::pow(std::max(-v.values[j], 0.0), n + 1);
    }
    return integrate(*v.grid, f) / (n + 1);
}

double psi_integral(const RadialFn& v, const Nonlinearity& nl) {
    const auto& g = *v.grid;
    std::vector<double> f(v.values.size());
    for (int j = 0; j < g.size(); ++j) f[j] = big_psi(nl, g.s[j], std::min(v.values[j], 0.0));
    return integrate(g, f);
}

double functional_J(const RadialFn& v, const Nonlinearity& nl) { return energy_E(v) - psi_integral(v, nl); }

std::vector<double> functional_J_gradient(const RadialFn& v, const Nonlinearity& nl) {
    const auto& g = *v.grid;
    auto m = ma_raw(v);
    std::vector<double> out(g.size(), 0.0);
    for (int k = 0; k + 1 < g.size(); ++k)
        out[k] = -g.domain.vol_const * g.quad[k] * (m[k] - nl.rhs(g.s[k], v.values[k]));
    return out;
}

double rayleigh(const RadialFn& v) {
    double I = energy_I(v);
    if (!(I > 0.0)) throw InvalidArgument("rayleigh: v must not vanish identically");
    return energy_E(v) / I;
}

double mt_check(const RadialFn& v, double gamma) {
    const int n = v.grid->n();
    if (!(gamma > 0.0 && gamma < 2.0 * n)) throw InvalidArgument("mt_check: gamma must lie in (0, 2n)");
    double E = energy_E(v);
    if (!(E > 0.0)) throw InvalidArgument("mt_check: v must be non-constant");
    double scale = std::pow(E, 1.0 / n);
    std::vector<double> f(v.values.size());
    for (std::size_t j = 0; j < f.size(); ++j)
        f[j] = std::exp(gamma * std::pow(std::abs(v.values[j]), 1.0 + 1.0 / n) / scale);
    return integrate(*v.grid, f);
}

double sobolev_check(const RadialFn& v, double p) {
    if (!(p > 1.0)) throw InvalidArgument("sobolev_check: exponent must exceed 1");
    const int n = v.grid->n();
    double E = energy_E(v);
    if (!(E > 0.0)) throw InvalidArgument("sobolev_check: v must be non-constant");
    std::vector<double> f(v.values.size());
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = std::pow(std::abs(v.values[j]), p);
    return std::pow(integrate(*v.grid, f), 1.0 / p) / std::pow(E, 1.0 / (n + 1));
}

double equation_residual(const RadialFn& v, const Nonlinearity& nl) {
    const auto& g = *v.grid;
    auto m = ma_raw(v);
    double r = 0.0;
    for (int j = 0; j + 1 < g.size(); ++j) r = std::max(r, std::abs(m[j] - nl.rhs(g.s[j], v.values[j])));
    return r;
}

std::string FunctionalReport::to_json() const {
    nlohmann::json j;
    j["E"] = E;
    j["I"] = I;
    j["J"] = J;
    j["rayleigh"] = rayleigh;
    j["mt_integral"] = mt_integral;
    return j.dump(2);
}

FunctionalReport functional_report(const RadialFn& v, const Nonlinearity& nl, double gamma) {
    FunctionalReport r;
    r.E = energy_E(v);
    r.I = energy_I(v);
    r.J = r.E - psi_integral(v, nl);
    r.rayleigh = r.I > 0 ? r.E / r.I : 0.0;
    r.mt_integral = r.E > 0 ? mt_check(v, gamma) : integrate(*v.grid, std::vector<double>(v.values.size(), 1.0));
    return r;
}

}  // namespace cmalab
