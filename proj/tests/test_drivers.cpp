#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "cmalab/drivers.hpp"
#include "cmalab/error.hpp"
#include "cmalab/functionals.hpp"
#include "cmalab/ma_operator.hpp"
#include "cmalab/ma_solvers.hpp"

using namespace cmalab;

namespace {

constexpr double kLambda = 1.4457964907366;

// int_x^0 of g by composite Simpson with 2000 panels
double simpson(const std::function<double(double)>& g, double x) {
    const int K = 2000;
    double h = -x / K, sum = g(x) + g(0.0);
    for (int k = 1; k < K; ++k) sum += (k % 2 ? 4.0 : 2.0) * g(x + k * h);
    return sum * h / 3.0;
}

}  // namespace

TEST(Sublinear, Examples) {
    Nonlinearity nl = make_sublinear_test(kLambda);
    EXPECT_NEAR(nl.psi(0.3, -1.0), kLambda, 1e-14);
    EXPECT_NEAR(nl.psi(0.3, -1e-9) / 1e-9, 2.0 * kLambda, 1e-8);
    for (double r : {1e-12, 1e-3, 1.0, 1e3, 1e9}) EXPECT_GT(nl.psi(0.7, -r), 0.0);
    EXPECT_THROW(make_sublinear_test(0.0), InvalidArgument);
}

TEST(Sublinear, ValidatorAcceptsAndRecordsLimits) {
    auto rep = validate_sublinear(make_sublinear_test(kLambda), kLambda);
    EXPECT_TRUE(rep.ok) << rep.to_json();
    EXPECT_NEAR(rep.X_big, 1.0, 0.01);
    EXPECT_NO_THROW(nlohmann::json::parse(rep.to_json()));
}

TEST(Sublinear, ValidatorRejectsLinearGrowth) {
    auto rep = validate_sublinear(make_eigen_nonlinearity(1, 2.0 * kLambda), kLambda);
    EXPECT_FALSE(rep.ok);
}

TEST(Superlinear, Examples) {
    Nonlinearity nl = make_superlinear_test(kLambda);
    EXPECT_NEAR(nl.psi(0.2, -1e-9) / 1e-9, kLambda / 2.0, 1e-8);
    EXPECT_NEAR(nl.theta, 0.25, 1e-15);
    EXPECT_NEAR(make_superlinear_test(kLambda, 2).theta, 2.0 / 6.0, 1e-15);
    for (double r : {10.0, 50.0}) EXPECT_LT(nl.psi(0.5, -r) * std::exp(-std::pow(r, 2.0)), 1e-6);
}

TEST(Superlinear, IntegralConditionForLargeX) {
    // (lambda/2)(x^2/2 + |x|^3/3) <= (1 - theta)/2 |x| (lambda/2)(|x| + x^2) for theta = 1/4, |x| >= 6
    Nonlinearity nl = make_superlinear_test(kLambda);
    for (double r = 6.0; r <= 200.0; r *= 1.3) {
        double lhs = simpson([&](double y) { return nl.rhs(0.5, y); }, -r);
        EXPECT_NEAR(lhs, kLambda / 2.0 * (r * r / 2.0 + r * r * r / 3.0), 1e-9 * lhs);
        EXPECT_NEAR(big_psi(nl, 0.5, -r), lhs, 1e-9 * lhs);
        EXPECT_LE(lhs, (1.0 - 0.25) / 2.0 * r * nl.rhs(0.5, -r));
    }
}

TEST(Superlinear, ValidatorReportsTail) {
    auto rep = validate_superlinear(make_superlinear_test(kLambda), kLambda);
    EXPECT_TRUE(rep.ok);
    EXPECT_TRUE(std::isfinite(rep.M_emp));
    EXPECT_LE(rep.M_emp, 6.0);
    EXPECT_NEAR(rep.X_star, 1.0, 0.02);
    double r10 = make_superlinear_test(kLambda).psi(0.5, -10.0) / 10.0;
    EXPECT_GT(r10, kLambda);
}

TEST(Superlinear, ValidatorThrowsOnSublinearInput) {
    EXPECT_THROW(validate_superlinear(make_sublinear_test(kLambda), kLambda), InvalidArgument);
}

TEST(Truncation, BoundedAgreesInsideAndFreezesOutside) {
    Nonlinearity nl = make_sublinear_test(kLambda);
    for (double m : {4.0, 8.0}) {
        Nonlinearity t = truncate_bounded(nl, m);
        for (double x = 0.0; x >= -m; x -= m / 37.0) EXPECT_EQ(t.rhs(0.4, x), nl.rhs(0.4, x));
        double frozen = t.rhs(0.4, -2.0 * m);
        for (double r : {2.0 * m, 3.0 * m, 100.0 * m}) {
            EXPECT_EQ(t.rhs(0.4, -r), frozen);
            EXPECT_EQ(t.rhs_dx(0.4, -r), 0.0);
        }
        // C1 at the inner and outer knots
        for (double r : {m, 2.0 * m}) {
            double d = 1e-6;
            EXPECT_NEAR(t.rhs(0.4, -r - d), t.rhs(0.4, -r + d), 1e-5);
            EXPECT_NEAR(t.rhs_dx(0.4, -r - d), t.rhs_dx(0.4, -r + d), 1e-5);
        }
        EXPECT_NEAR(big_psi(t, 0.4, -3.0 * m), big_psi_quadrature(t, 0.4, -3.0 * m), 1e-7 * big_psi(t, 0.4, -3.0 * m));
    }
}

TEST(Truncation, PolynomialInactiveForQuadraticGrowth) {
    Nonlinearity nl = make_superlinear_test(kLambda);
    auto tp = truncation_params(nl, 8.0, 1e-2);
    EXPECT_FALSE(tp.active);
    EXPECT_GT((double)tp.p_trunc, nl.n + 1.0);
    EXPECT_NEAR(tp.delta_m, 1.0 / (tp.B + 1.0), 1e-15);
    Nonlinearity same = truncate_polynomial(nl, tp);
    for (double x : {-1.0, -20.0, -1e3}) EXPECT_EQ(same.rhs(0.5, x), nl.rhs(0.5, x));
}

TEST(Truncation, PolynomialActiveBranch) {
    Nonlinearity nl = make_superlinear_test(kLambda);
    TruncationParams tp;
    tp.m = 8.0;
    tp.B = nl.rhs(0.5, -8.0);
    tp.delta_m = 1.0 / (tp.B + 1.0);
    tp.p_trunc = 9;
    tp.K_m = (tp.B + 1.0) * std::pow(tp.m, 1.0 - tp.p_trunc);
    tp.active = true;
    // p = 9 is hand-picked; only the shape of the truncated profile is checked here
    Nonlinearity t = truncate_polynomial(nl, tp);
    for (double x = 0.0; x >= -8.0; x -= 0.37) EXPECT_EQ(t.rhs(0.5, x), nl.rhs(0.5, x));
    for (double r : {8.0 + tp.delta_m, 10.0, 40.0})
        EXPECT_NEAR(t.rhs(0.5, -r), tp.K_m * std::pow(r, tp.p_trunc - 1), 1e-12 * t.rhs(0.5, -r));
    double r1 = 8.0 + tp.delta_m, d = 1e-7;
    EXPECT_NEAR(t.rhs(0.5, -r1 + d), t.rhs(0.5, -r1 - d), 1e-4 * t.rhs(0.5, -r1));
}

TEST(Truncation, BoundaryPerturbationFloor) {
    Nonlinearity nl = make_superlinear_test(kLambda);
    for (double delta : {1e-1, 1e-2}) {
        Nonlinearity p = boundary_perturbed(nl, delta);
        for (double s : {0.0, 0.3, 0.8, 0.99, 1.0})
            for (double x : {0.0, -0.5, -4.0}) EXPECT_GE(p.rhs(s, x), delta * delta);
        EXPECT_EQ(eta_delta(1.0, delta), 0.0);
        double s_in = std::pow(1.0 - 2.0 * delta, 2);
        EXPECT_EQ(eta_delta(s_in, delta), 1.0);
        EXPECT_NEAR(p.rhs(0.0, -2.0), nl.rhs(0.0, -2.0) + delta * delta, 1e-14);
        EXPECT_NEAR(p.rhs(1.0, -2.0), delta * delta, 1e-14);
    }
    EXPECT_THROW(boundary_perturbed(nl, -1.0), InvalidArgument);
}

TEST(EnergyProbe, SteadyStateHasZeroDissipation) {
    auto g = make_grid(1, 512);
    // u = s - 1 solves MA(u) = 1 = psi^n for a constant nonlinearity
    Nonlinearity one;
    one.n = 1;
    one.name = "one";
    one.rhs = [](double, double) { return 1.0; };
    one.rhs_dx = [](double, double) { return 0.0; };
    RadialFn u = sample(g, [](double s) { return s - 1.0; });
    auto pr = energy_control_probe(u, one, 3.0);
    EXPECT_TRUE(pr.finite);
    EXPECT_LE(pr.dissipation, 1e-24);
    EXPECT_GE(pr.termwise_min, -1e-14);
    EXPECT_NEAR(pr.E, energy_E(u), 1e-14);
}

TEST(EnergyProbe, PerturbedStateTermwiseInequality) {
    auto g = make_grid(1, 512);
    Nonlinearity nl = perturbed(make_superlinear_test(kLambda), 1e-2);
    RadialFn u = sample(g, [](double s) { return 0.8 * (s * s - 1.0) + 0.1 * (s - 1.0); });
    auto pr = energy_control_probe(u, nl, 3.0);
    EXPECT_TRUE(pr.finite);
    EXPECT_GT(pr.dissipation, 0.0);
    EXPECT_GT(pr.beta_integral, 0.0);
    EXPECT_GE(pr.termwise_min, -1e-14);
}

TEST(NewtonPolish, ConvergesBelowFirstEigenvalue) {
    auto g = make_grid(1, 512);
    auto e = eigen_inverse_iteration(g);
    // psi = (lambda1 / 2)|x| + 1/2 stays below the first eigenvalue, so the problem is uniquely solvable
    Nonlinearity nl = perturbed(make_eigen_nonlinearity(1, 0.5 * e.lambda1), 0.5);
    RadialFn guess = solve_radial_ma(g, std::vector<double>(g->size(), 0.6));
    auto r = newton_polish(guess, nl, 1e-11);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.residual, 1e-9);
    EXPECT_LE(equation_residual(r.u, nl), 1e-9);
    EXPECT_TRUE(in_psh_cone(r.u, 0.0, 1e-9));
}

TEST(RandomPsh, SamplesLieInCone) {
    std::mt19937_64 rng(41);
    for (int n = 1; n <= 3; ++n) {
        auto g = make_grid(n, 256);
        for (int k = 0; k < 25; ++k) {
            RadialFn v = random_psh(g, rng, 0.05, 5.0);
            EXPECT_TRUE(in_psh_cone(v, 0.0, 1e-9));
            EXPECT_EQ(v.values.back(), 0.0);
            double sup = v.sup_norm();
            EXPECT_GE(sup, 0.05 * (1 - 1e-12));
            EXPECT_LE(sup, 5.0 * (1 + 1e-12));
        }
    }
}

TEST(SublinearDriver, SmallCascadeReachesMinimizer) {
    auto g = make_grid(1, 256);
    auto e = eigen_inverse_iteration(g);
    SublinearOptions opt;
    opt.m_levels = {4.0};
    opt.eps_levels = {1e-2, 1e-4};
    opt.challenge = 10;
    auto rep = run_sublinear(make_sublinear_test(e.lambda1), g, e.lambda1, opt);
    EXPECT_TRUE(rep.converged);
    EXPECT_LE(rep.residual, opt.tol);
    EXPECT_GE(rep.norm, 1e-3);
    EXPECT_LT(rep.J, 0.0);
    EXPECT_GE(rep.challenge_gap, 0.0);
    EXPECT_GE(rep.properness_slack, 0.0);
    EXPECT_GE(rep.dissipation_min, 0.0);
    EXPECT_LE(rep.descent_worst, 1e-9);
    EXPECT_LT(rep.u.sup_norm(), 4.0);
    EXPECT_NO_THROW(nlohmann::json::parse(rep.to_json()));
}
