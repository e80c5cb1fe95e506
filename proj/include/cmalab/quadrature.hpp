#pragma once

#include <functional>
#include <vector>

namespace cmalab {

struct GaussRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

/// Gauss-Legendre rule with `order` points (Newton iteration on P_order).
GaussRule gauss_legendre(int order);

/// Integrate f over [a, b] with a cached rule of the given order.
double gauss_integrate(const std::function<double(double)>& f, double a, double b, int order = 10);

struct AdaptiveResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = true;
    int evaluations = 0;
};

/// Adaptive Simpson quadrature with Richardson-corrected panels.
/// Converged when every accepted panel meets its share of max(abs_tol, rel_tol*|I|).
AdaptiveResult adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                double rel_tol, double abs_tol = 1e-300, int max_depth = 50);

/// Finite-difference weights for derivatives 0..max_order at x0 on arbitrary stencil
/// (Fornberg 1988). Result[k][i] multiplies f(x[i]) for derivative k.
std::vector<std::vector<double>> fornberg_weights(double x0, const std::vector<double>& x, int max_order);

}  // namespace cmalab
