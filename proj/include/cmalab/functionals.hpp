#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cmalab/radial_domain.hpp"

namespace cmalab {

enum class GrowthClass { eigen, sublinear, superlinear, custom };

std::string to_string(GrowthClass g);

/// Right-hand side psi(s, x) of MA(u) = psi^n(s, u). The equation only sees psi^n, so that is
/// what is stored; psi itself is recovered as the n-th root.
struct Nonlinearity {
    using Fn = std::function<double(double, double)>;

    int n = 1;
    std::string name;
    GrowthClass growth = GrowthClass::custom;
    Fn rhs;       // psi^n(s, x)
    Fn rhs_dx;    // d/dx psi^n
    Fn Psi;       // optional closed form of int_x^0 psi^n(s, y) dy

    // Flow-side bounds |f| <= K1 + K2|u|, |f_t| + |f_u| + |grad f| <= K3 and growth parameters.
    double K1 = 0.0, K2 = 0.0, K3 = 0.0;
    double theta = 0.0, sigma = 0.0, M = 1.0, A = 0.0, X_big = 0.0;

    double psi(double s, double x) const;
    double psi_dx(double s, double x) const;
};

/// psi = lambda |x|, psi^n = lambda^n |x|^n.
Nonlinearity make_eigen_nonlinearity(int n, double lambda);

/// psi^n + eps (the perturbation that keeps the flow non-degenerate).
Nonlinearity perturbed(const Nonlinearity& nl, double eps);

/// Psi(s, x) = int_x^0 psi^n(s, y) dy by adaptive Simpson at relative tolerance 1e-8,
/// or the closed form when the nonlinearity carries one.
double big_psi(const Nonlinearity& nl, double s, double x);
/// Always uses quadrature (for cross-checking closed forms).
double big_psi_quadrature(const Nonlinearity& nl, double s, double x);

/// ma_raw with the negative-density clamp: at nodes 0..N-2 values in [-1e-10, 0) become 0 and
/// anything lower throws ConeViolation; the boundary node is clamped at 0.
std::vector<double> ma_rad(const RadialFn& v);

inline constexpr double kNegTol = 1e-10;

double energy_E(const RadialFn& v);
double energy_I(const RadialFn& v);
double psi_integral(const RadialFn& v, const Nonlinearity& nl);  // int Psi(., v)
double functional_J(const RadialFn& v, const Nonlinearity& nl);
/// dJ/dv_k at nodes 0..N-2 (last entry 0): -c_n q_k (MA_k - psi^n(s_k, v_k)).
std::vector<double> functional_J_gradient(const RadialFn& v, const Nonlinearity& nl);
double rayleigh(const RadialFn& v);
double mt_check(const RadialFn& v, double gamma);
double sobolev_check(const RadialFn& v, double p);

/// sup |ma_rad(v) - psi^n(., v)| over nodes 0..N-2.
double equation_residual(const RadialFn& v, const Nonlinearity& nl);

struct FunctionalReport {
    double E = 0.0, I = 0.0, J = 0.0, rayleigh = 0.0, mt_integral = 0.0;
    std::string to_json() const;
};

FunctionalReport functional_report(const RadialFn& v, const Nonlinearity& nl, double gamma);

}  // namespace cmalab
