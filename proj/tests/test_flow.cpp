#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "cmalab/drivers.hpp"
#include "cmalab/error.hpp"
#include "cmalab/flow.hpp"
#include "cmalab/ma_operator.hpp"
#include "cmalab/ma_solvers.hpp"

using namespace cmalab;

namespace {

double max_abs_diff(const RadialFn& a, const RadialFn& b) {
    double e = 0.0;
    for (int j = 0; j < a.size(); ++j) e = std::max(e, std::abs(a[j] - b[j]));
    return e;
}

const EigenResult& eigen1(int N) {
    static std::map<int, EigenResult> cache;
    auto it = cache.find(N);
    if (it == cache.end()) it = cache.emplace(N, eigen_inverse_iteration(make_grid(1, N))).first;
    return it->second;
}

// discrete L2 norm of mu(ma_rad(v)) - f(s, t, v) over the equation nodes
double equation_gap(const RadialFn& v, const FlowConfig& cfg, double t) {
    auto m = ma_raw(v);
    const auto& g = *v.grid;
    std::vector<double> r(g.size(), 0.0);
    for (int j = 0; j + 1 < g.size(); ++j) r[j] = std::pow(cfg.mu(m[j]) - cfg.forcing.f(g.s[j], t, v[j]), 2);
    return std::sqrt(integrate(g, r));
}

}  // namespace

TEST(Flow, ZeroForcingKeepsLinearProfile) {
    auto g = make_grid(1, 256);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = constant_forcing(0.0);
    fc.t_end = 0.5;
    fc.steady_tol = -1.0;
    RadialFn v0 = sample(g, [](double s) { return s - 1.0; });
    auto st = run(fc, v0);
    EXPECT_NEAR(st.t, 0.5, 1e-12);
    EXPECT_LE(max_abs_diff(st.v, v0), 1e-12);
    EXPECT_GT(st.history.size(), 1u);
}

TEST(Flow, ConvergedEigenpairIsStationary) {
    const auto& e = eigen1(1024);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = eigen_forcing(1, e.lambda1, fc.mu, 0.0);
    fc.t_end = 10.0;
    fc.steady_tol = -1.0;
    FlowState st = make_flow_state(fc, e.u1);
    double worst = 0.0;
    while (st.t < fc.t_end - 1e-12) {
        step(st, fc, fc.t_end - st.t);
        worst = std::max(worst, max_abs_diff(st.v, e.u1));
    }
    EXPECT_LE(worst, 1e-4);
}

TEST(Flow, OneStepReducesEquationGap) {
    auto g = make_grid(1, 512);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = constant_forcing(0.0);
    fc.dt_init = 0.05;
    RadialFn raw = sample(g, [](double s) { return s - 1.0 + 0.05 * std::sin(M_PI * s) * (s - 1.0); });
    raw.values.back() = 0.0;
    RadialFn v0 = prepare_initial(raw, fc.forcing, fc.mu, 0.05);
    FlowState st = make_flow_state(fc, v0);
    double before = equation_gap(st.v, fc, 0.0);
    step(st, fc);
    double after = equation_gap(st.v, fc, st.t);
    EXPECT_GT(before, 1e-3);
    EXPECT_LT(after, before);
}

TEST(Flow, SignBoundaryAndUniformBound) {
    const auto& e = eigen1(1024);
    FlowConfig fc;
    fc.mu = MuFunction::build(4.0);
    fc.forcing = eigen_forcing(1, e.lambda1, fc.mu, 1.0);
    fc.t_end = 1.5;
    ASSERT_GT(fc.forcing.K2, 0.0);
    RadialFn v0 = prepare_initial(e.u1, fc.forcing, fc.mu, 0.05);
    FlowState st = make_flow_state(fc, v0);
    const double u0 = v0.sup_norm(), h = e.u1.grid->h_max;
    while (st.t < fc.t_end - 1e-12) {
        step(st, fc, fc.t_end - st.t);
        ASSERT_EQ(st.v.values.back(), 0.0);
        ASSERT_LE(*std::max_element(st.v.values.begin(), st.v.values.end()), 0.0);
        double lower = -(u0 + fc.forcing.K1 / fc.forcing.K2) * std::exp(fc.forcing.K2 * st.t);
        EXPECT_DOUBLE_EQ(lower, uniform_lower_bound(fc, 1, u0, st.t));
        EXPECT_GE(st.v.min(), lower - 10.0 * h * h);
        EXPECT_GT(st.diag.ma_min, 0.0);
    }
}

TEST(Stability, IdenticalDataGiveZeroGap) {
    const auto& e = eigen1(512);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = eigen_forcing(1, e.lambda1, fc.mu, 1.0);
    RadialFn a = prepare_initial(e.u1, fc.forcing, fc.mu, 0.05);
    auto r = stability_pair(fc, a, a, 0.5);
    EXPECT_EQ(r.initial_gap, 0.0);
    EXPECT_EQ(r.sup_gap, 0.0);
    EXPECT_TRUE(r.holds());
}

TEST(Stability, PerturbedEigenDataStayWithinExponentialBound) {
    const auto& e = eigen1(1024);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = eigen_forcing(1, e.lambda1, fc.mu, 1.0);
    RadialFn b = e.u1;
    for (int j = 0; j < b.size(); ++j) b[j] += 1e-3 * (b.grid->s[j] - 1.0);
    RadialFn a0 = prepare_initial(e.u1, fc.forcing, fc.mu, 0.05);
    RadialFn b0 = prepare_initial(b, fc.forcing, fc.mu, 0.05);
    auto r = stability_pair(fc, a0, b0, 1.0);
    EXPECT_GT(r.K, 0.0);
    EXPECT_NEAR(r.bound, std::exp(r.K * r.T) * r.initial_gap, 1e-12 * r.bound);
    EXPECT_TRUE(r.holds()) << r.sup_gap << " vs " << r.bound;
}

TEST(Stability, StateIndependentForcingDoesNotAmplify) {
    auto g = make_grid(1, 512);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = constant_forcing(0.3);
    RadialFn a = sample(g, [](double s) { return 0.5 * (s * s - 1.0) + 0.5 * (s - 1.0); });
    RadialFn b = sample(g, [](double s) { return 0.6 * (s * s - 1.0) + 0.4 * (s - 1.0); });
    RadialFn a0 = prepare_initial(a, fc.forcing, fc.mu, 0.05), b0 = prepare_initial(b, fc.forcing, fc.mu, 0.05);
    auto r = stability_pair(fc, a0, b0, 1.0);
    EXPECT_EQ(r.K, 0.0);
    EXPECT_LE(r.sup_gap, max_abs_diff(a0, b0) + 100.0 * g->h_max * g->h_max);
}

TEST(PrepareInitial, ConstantCaseIsIdentity) {
    auto g = make_grid(2, 256);
    RadialFn raw = sample(g, [](double s) { return s - 1.0; });
    RadialFn out = prepare_initial(raw, constant_forcing(0.0), MuFunction::log_branch(), 0.05);
    EXPECT_LE(max_abs_diff(out, raw), 1e-13);
}

TEST(PrepareInitial, DensityUnchangedOutsideBand) {
    auto g = make_grid(1, 512);
    const double delta = 0.05;
    RadialFn raw = sample(g, [](double s) { return (s * s - 1.0) / 2.0; });
    MuFunction mu = MuFunction::log_branch();
    Forcing f = constant_forcing(0.7);
    RadialFn out = prepare_initial(raw, f, mu, delta);
    auto a = ma_raw(raw), b = ma_raw(out);
    for (int j = 0; j + 1 < g->size(); ++j) {
        if (g->s[j] <= 1.0 - 2.0 * delta) EXPECT_NEAR(b[j], a[j], 1e-10 * std::max(1.0, a[j]));
        if (g->s[j] >= 1.0 - delta) EXPECT_NEAR(b[j], std::exp(0.7), 1e-10);
    }
    EXPECT_LE(compatibility_residual(out, f, mu), 1e-8);
}

TEST(PrepareInitial, SublinearCompatibility) {
    const auto& e = eigen1(1024);
    MuFunction mu = MuFunction::log_branch();
    Forcing f = forcing_from_nonlinearity(perturbed(make_sublinear_test(e.lambda1, 1), 1e-2), mu);
    RadialFn v0 = prepare_initial(0.5 * e.u1, f, mu, 0.05);
    EXPECT_LE(compatibility_residual(v0, f, mu), 1e-8);
}

TEST(PrepareInitial, ReportsMuInverseOutOfRange) {
    auto g = make_grid(1, 128);
    RadialFn raw = sample(g, [](double s) { return s - 1.0; });
    // exp(-1000) underflows to 0, which is outside the range of mu^{-1}
    EXPECT_THROW(prepare_initial(raw, constant_forcing(-1000.0), MuFunction::log_branch(), 0.05), NumericalError);
}

TEST(Monitors, SteadyEigenRun) {
    const auto& e = eigen1(512);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = eigen_forcing(1, e.lambda1, fc.mu, 0.0);
    fc.t_end = 5.0;
    auto st = run(fc, e.u1);
    auto m = monitors(st, fc);
    EXPECT_TRUE(m.finite);
    EXPECT_GT(m.ma_min, 0.0);
    EXPECT_LE(m.ut_over_M, fc.steady_tol);
}

TEST(Monitors, SublinearRefinementWithinFactorTwo) {
    double r[2];
    for (int k = 0; k < 2; ++k) {
        const auto& e = eigen1(k == 0 ? 256 : 512);
        FlowConfig fc;
        fc.mu = MuFunction::log_branch();
        fc.forcing = forcing_from_nonlinearity(perturbed(make_sublinear_test(e.lambda1, 1), 1e-2), fc.mu);
        fc.t_end = 2.0;
        RadialFn v0 = prepare_initial(0.5 * e.u1, fc.forcing, fc.mu, 0.05);
        auto m = monitors(run(fc, v0), fc);
        ASSERT_TRUE(m.finite);
        EXPECT_GT(m.ma_min, 0.0);
        r[k] = m.ut_over_M;
    }
    EXPECT_LE(std::max(r[0], r[1]), 2.0 * std::min(r[0], r[1]));
}

TEST(Flow, GradientFlowDescendsAndDissipates) {
    const auto& e = eigen1(512);
    Nonlinearity nl = perturbed(make_sublinear_test(e.lambda1, 1), 1e-2);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = forcing_from_nonlinearity(nl, fc.mu);
    fc.energy = nl;
    fc.t_end = 5.0;
    auto st = run(fc, prepare_initial(0.5 * e.u1, fc.forcing, fc.mu, 0.05));
    ASSERT_GT(st.history.size(), 2u);
    for (std::size_t k = 1; k < st.history.size(); ++k) {
        EXPECT_LE(st.history[k].J, st.history[k - 1].J + 1e-9) << "step " << k;
        EXPECT_GE(st.history[k].dissipation_min, 0.0);
    }
    EXPECT_LT(st.history.back().J, st.history.front().J);
}

TEST(Flow, SlopeChainHoldsForMuP) {
    const auto& e = eigen1(512);
    FlowConfig fc;
    fc.mu = MuFunction::build(4.0);
    fc.forcing = eigen_forcing(1, e.lambda1, fc.mu, 1.0);
    fc.t_end = 0.5;
    auto st = run(fc, prepare_initial(1.5 * e.u1, fc.forcing, fc.mu, 0.05));
    for (std::size_t k = 1; k < st.history.size(); ++k) {
        EXPECT_GE(st.history[k].dissipation_min, 0.0);
        EXPECT_GE(st.history[k].slope_chain_min, -1e-12);
    }
}

TEST(Flow, RejectsInvalidConfigs) {
    auto g = make_grid(1, 64);
    RadialFn v0 = sample(g, [](double s) { return s - 1.0; });
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = constant_forcing(0.0);
    fc.dt_init = 2.0;
    fc.dt_max = 1.0;
    EXPECT_THROW(make_flow_state(fc, v0), InvalidArgument);
    fc.dt_init = 1e-3;
    fc.psh_floor = 0.0;
    EXPECT_THROW(make_flow_state(fc, v0), InvalidArgument);
    fc.psh_floor = 1e-6;
    RadialFn bad = sample(g, [](double s) { return s; });
    EXPECT_THROW(make_flow_state(fc, bad), InvalidArgument);
    EXPECT_THROW(eigen_forcing(1, -1.0, fc.mu, 0.0), InvalidArgument);
}

TEST(Flow, TrajectoryCsvColumns) {
    auto g = make_grid(1, 64);
    FlowConfig fc;
    fc.mu = MuFunction::log_branch();
    fc.forcing = constant_forcing(0.0);
    fc.t_end = 0.01;
    auto st = run(fc, sample(g, [](double s) { return s - 1.0; }));
    auto path = std::filesystem::temp_directory_path() / "cmalab_traj.csv";
    write_trajectory_csv(path.string(), st, "config_hash = abc");
    std::ifstream is(path);
    std::string first, header;
    std::getline(is, first);
    EXPECT_EQ(first, "# config_hash = abc");
    std::getline(is, header);
    EXPECT_EQ(header.rfind("t,J,sup_ut,ma_min,ma_max,u_min", 0), 0u) << header;
    std::filesystem::remove(path);
}
