#pragma once

#include <string>
#include <vector>

#include "cmalab/radial_domain.hpp"

namespace cmalab {

/// v'(s) = (n int_0^s g sigma^{n-1})^{1/n} / s with v(1) = 0. Rejects negative g.
RadialFn solve_radial_ma(const GridPtr& g, const std::vector<double>& density);

struct EigenResult {
    double lambda1 = 0.0;
    RadialFn u1;
    int iterations = 0;
    double residual = 0.0;  // sup over nodes 0..N-2 of |ma_rad(u1) - (lambda1 (-u1))^n|
    bool converged = false;
    bool rounding_limited = false;  // descent stopped because E/I could no longer decrease in floating point
    std::string method;
    std::vector<double> rayleigh_history;  // E/I after each accepted iterate
};

/// u_{k+1} = MA^{-1}((lambda_k (-u_k))^n) with inf u_{k+1} = -1, lambda_{k+1} = rayleigh^{1/n}.
/// MA^{-1} is the exact inverse of the discrete operator. `guess` defaults to s - 1.
EigenResult eigen_inverse_iteration(const GridPtr& g, double tol = 1e-10, int max_iter = 200,
                                    const RadialFn* guess = nullptr);

/// Preconditioned descent on E/I over the psh cone: direction -DMA^{-1}(MA - R (-v)^n),
/// backtracking from 1 with Armijo 1e-4, psh_project after each step. Also stops (converged) when
/// the first-order decrease falls below the rounding resolution of E/I.
EigenResult eigen_rayleigh_descent(const GridPtr& g, double tol = 1e-10, int max_iter = 200,
                                   const RadialFn* guess = nullptr);

/// sup residual of the eigen equation over the equation nodes.
double eigen_residual(const RadialFn& u, double lambda);

struct ComparisonVerdict {
    bool premise = false;      // ma_rad(v1) >= ma_rad(v2) at nodes 0..N-2
    bool conclusion = false;   // v1 <= v2 + 10 h^2
    bool equal = false;        // identical inputs
    double max_excess = 0.0;   // max(v1 - v2)
    bool verdict() const { return !premise || conclusion; }
};

ComparisonVerdict comparison_check(const RadialFn& v1, const RadialFn& v2);

/// Un-normalized iteration u <- MA^{-1}(((1 - theta) lambda1)^n (-u)^n); returns sup|u_k| per step.
std::vector<double> rigidity_iteration(const GridPtr& g, double lambda1, double theta, int steps);

}  // namespace cmalab
