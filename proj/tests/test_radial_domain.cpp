#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cmalab/error.hpp"
#include "cmalab/isotonic.hpp"
#include "cmalab/ma_operator.hpp"
#include "cmalab/radial_domain.hpp"
#include "oracles.hpp"

using namespace cmalab;

namespace {

double max_err(const std::vector<double>& a, const std::function<double(double)>& f, const RadialGrid& g) {
    double e = 0.0;
    for (int j = 0; j < g.size(); ++j) e = std::max(e, std::abs(a[j] - f(g.s[j])));
    return e;
}

}  // namespace

TEST(Grid, UniformNodesN16) {
    auto g = make_grid(1, 16);
    ASSERT_EQ(g->size(), 16);
    for (int j = 0; j < 16; ++j) EXPECT_NEAR(g->s[j], j / 15.0, 1e-15);
    EXPECT_EQ(g->s.front(), 0.0);
    EXPECT_EQ(g->s.back(), 1.0);
}

TEST(Grid, QuadratureMomentN2) {
    auto g = make_grid(2, 16);
    double sum = 0.0;
    for (double q : g->quad) sum += q;
    EXPECT_NEAR(sum, 0.5, 0.5e-12);
}

TEST(Grid, QuadratureWeightsNonnegativeAndMoment) {
    for (int n = 1; n <= 4; ++n)
        for (auto c : {Clustering::uniform, Clustering::boundary_refined}) {
            auto g = make_grid(n, 257, c);
            double sum = 0.0;
            for (double q : g->quad) {
                EXPECT_GE(q, 0.0);
                sum += q;
            }
            EXPECT_NEAR(sum * n, 1.0, 1e-12) << "n=" << n;
            for (int j = 1; j < g->size(); ++j) EXPECT_GT(g->s[j], g->s[j - 1]);
        }
}

TEST(Grid, BoundaryRefinedPlacesQuarterNearSphere) {
    auto g = make_grid(1, 4096, Clustering::boundary_refined);
    int count = 0;
    for (double s : g->s) count += s >= 0.9;
    EXPECT_GE(count, 1024);
    EXPECT_EQ(g->s.back(), 1.0);
}

TEST(Grid, RejectsTooFewNodes) {
    EXPECT_THROW(make_grid(1, 15), InvalidArgument);
    EXPECT_THROW(make_grid(0, 64), InvalidArgument);
    EXPECT_NO_THROW(make_grid(1, 16));
}

TEST(Domain, BallConstants) {
    for (int n = 1; n <= 3; ++n) {
        BallDomain d = make_ball(n);
        EXPECT_NEAR(d.vol_const, n * std::pow(2.0 * M_PI, n), 1e-12);
        EXPECT_EQ(d.rho_at(1.0), 0.0);
        EXPECT_LT(d.rho_at(0.5), 0.0);
        EXPECT_EQ(d.eps0, 1.0);
    }
}

TEST(Derivatives, LinearExact) {
    auto g = make_grid(1, 64);
    RadialFn v = sample(g, [](double s) { return s - 1.0; });
    auto a = d1(v), b = d2(v);
    for (int j = 0; j < g->size(); ++j) {
        EXPECT_NEAR(a[j], 1.0, 1e-12);
        EXPECT_NEAR(b[j], 0.0, 1e-9);
    }
}

TEST(Derivatives, QuadraticExact) {
    auto g = make_grid(1, 64);
    RadialFn v = sample(g, [](double s) { return s * s; });
    EXPECT_LE(max_err(d1(v), [](double s) { return 2.0 * s; }, *g), 1e-10);
    EXPECT_LE(max_err(d2(v), [](double) { return 2.0; }, *g), 1e-10);
}

TEST(Derivatives, RichardsonSecondOrder) {
    double e1[2], e2[2];
    for (int k = 0; k < 2; ++k) {
        auto g = make_grid(1, k == 0 ? 101 : 201);
        RadialFn a = sample(g, [](double s) { return std::sin(s); });
        RadialFn b = sample(g, [](double s) { return std::exp(s); });
        e1[k] = max_err(d1(a), [](double s) { return std::cos(s); }, *g);
        e2[k] = max_err(d2(b), [](double s) { return std::exp(s); }, *g);
    }
    double r1 = oracle::richardson_ratio(e1[0], e1[1]), r2 = oracle::richardson_ratio(e2[0], e2[1]);
    EXPECT_GE(r1, 3.0);
    EXPECT_LE(r1, 5.0);
    EXPECT_GE(r2, 3.0);
    EXPECT_LE(r2, 5.0);
}

TEST(Integrate, DiscVolumeMatchesMonteCarlo) {
    auto g = make_grid(1, 64);
    std::vector<double> one(g->size(), 1.0);
    double vol = integrate(*g, one);
    EXPECT_NEAR(vol, 2.0 * M_PI, 1e-12);
    double mc = oracle::disc_volume_monte_carlo(2000000, 7);
    // standard error of the estimate is about 8 * sqrt(p(1-p)/n) ~ 2.3e-3
    EXPECT_NEAR(vol, mc, 1e-2);
}

TEST(Integrate, ZeroAndFirstMoment) {
    auto g = make_grid(1, 64);
    std::vector<double> zero(g->size(), 0.0);
    EXPECT_EQ(integrate(*g, zero), 0.0);
    RadialFn f = sample(g, [](double s) { return s; });
    EXPECT_NEAR(integrate(f), g->domain.vol_const / 2.0, g->domain.vol_const * g->h_max * g->h_max);
}

TEST(Integrate, RejectsNonFinite) {
    auto g = make_grid(1, 32);
    std::vector<double> f(g->size(), 1.0);
    f[5] = std::nan("");
    EXPECT_THROW(integrate(*g, f), InvalidArgument);
}

TEST(Integrate, IntegrationByPartsWithinTenHSquared) {
    for (int n = 1; n <= 3; ++n)
        for (int N : {128, 1024}) {
            auto g = make_grid(n, N);
            RadialFn v = sample(g, [](double s) { return s * (1.0 - s) * std::exp(s); });
            auto dv = d1(v);
            std::vector<double> f(g->size());
            for (int j = 0; j < g->size(); ++j) f[j] = dv[j] * g->s[j];
            double lhs = (integrate(*g, f) + n * integrate(v)) / g->domain.vol_const;
            EXPECT_LE(std::abs(lhs), 10.0 * g->h_max * g->h_max) << "n=" << n << " N=" << N;
        }
}

TEST(Isotonic, MatchesExhaustiveSearch) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1.0, 1.0), W(0.1, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + trial % 10;
        std::vector<double> y(n), w(n);
        for (int i = 0; i < n; ++i) {
            y[i] = U(rng);
            w[i] = W(rng);
        }
        auto fit = isotonic_regression(y, w);
        auto ref = oracle::isotonic_brute(y, w);
        for (int i = 0; i < n; ++i) EXPECT_NEAR(fit[i], ref[i], 1e-12);
    }
}

TEST(Isotonic, MatchesMaxMinFormula) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> G(0.0, 1.0);
    std::vector<double> y(64), w(64);
    for (int i = 0; i < 64; ++i) {
        y[i] = 0.05 * i + G(rng);
        w[i] = 0.5 + std::abs(G(rng));
    }
    auto fit = isotonic_regression(y, w);
    auto ref = oracle::isotonic_maxmin(y, w);
    for (int i = 0; i < 64; ++i) EXPECT_NEAR(fit[i], ref[i], 1e-12);
}

TEST(PshProject, PshInputUnchanged) {
    auto g = make_grid(1, 128);
    RadialFn v = sample(g, [](double s) { return (s * s - 1.0) / 2.0 + 0.1 * (s - 1.0); });
    v.values.back() = 0.0;
    RadialFn p = psh_project(v, 0.05);
    EXPECT_EQ(p.values, v.values);
}

TEST(PshProject, ZeroStaysZero) {
    auto g = make_grid(2, 64);
    RadialFn z(g);
    RadialFn p = psh_project(z, 0.0);
    for (double x : p.values) EXPECT_EQ(x, 0.0);
}

TEST(PshProject, OscillatingInputAgainstMaxMinRegression) {
    auto g = make_grid(1, 64);
    RadialFn v = sample(g, [](double s) { return -std::sin(4.0 * M_PI * s) * (1.0 - s); });
    v.values.back() = 0.0;
    RadialFn p = psh_project(v, 0.0);

    // direct scan of the cone
    auto m = ma_raw(p);
    auto S = slopes(p);
    for (int j = 0; j + 1 < g->size(); ++j) EXPECT_GE(m[j], -1e-10);
    for (double x : S) EXPECT_GE(x, -1e-12);
    EXPECT_EQ(p.values.back(), 0.0);

    // cumulative mass of the projection is the weighted monotone fit of the input's, clipped at 0
    auto W = cumulative_mass(*g, ma_raw(v));
    std::vector<double> y, w;
    std::vector<int> idx;
    for (int i = 0; i + 1 < g->size(); ++i)
        if (g->quad[i] > 0.0) {
            idx.push_back(i);
            y.push_back(W[i]);
            w.push_back(g->quad[i]);
        }
    auto ref = oracle::isotonic_maxmin(y, w);
    auto Wp = cumulative_mass(*g, ma_raw(p));
    for (std::size_t k = 0; k < idx.size(); ++k) EXPECT_NEAR(Wp[idx[k]], std::max(ref[k], 0.0), 1e-10);
}

TEST(PshProject, Idempotent) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int n = 1; n <= 3; ++n) {
        auto g = make_grid(n, 200);
        for (int k = 0; k < 10; ++k) {
            double a = U(rng), b = 2.0 * U(rng), c = 1.0 + 5.0 * std::abs(U(rng));
            RadialFn v = sample(g, [&](double s) { return (a * std::cos(c * s) + b * s * s) * (1.0 - s); });
            v.values.back() = 0.0;
            for (double floor : {0.0, 0.1}) {
                RadialFn p1 = psh_project(v, floor);
                RadialFn p2 = psh_project(p1, floor);
                EXPECT_EQ(p1.values, p2.values);
                EXPECT_TRUE(in_psh_cone(p1, floor, 1e-9));
            }
        }
    }
}

TEST(PshProject, ZeroMassNearOriginInHighDimension) {
    auto g = make_grid(3, 1024);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int k = 0; k < 40; ++k) {
        double a = U(rng), b = U(rng), c = 1.0 + 6.0 * std::abs(U(rng));
        RadialFn v = sample(g, [&](double s) { return (a * std::sin(c * M_PI * s) + b * s) * (1.0 - s) + (s - 1.0); });
        v.values.back() = 0.0;
        RadialFn p1 = psh_project(v, 0.0);
        RadialFn p2 = psh_project(p1, 0.0);
        for (int j = 0; j < g->size(); ++j) ASSERT_NEAR(p1.values[j], p2.values[j], 1e-12) << k << " node " << j;
        EXPECT_TRUE(in_psh_cone(p1, 0.0, 1e-9));
    }
}

TEST(PshProject, RequiresZeroBoundary) {
    auto g = make_grid(1, 32);
    RadialFn v = sample(g, [](double s) { return s; });
    EXPECT_THROW(psh_project(v, 0.0), InvalidArgument);
    RadialFn w = sample(g, [](double s) { return s - 1.0; });
    EXPECT_THROW(psh_project(w, -1.0), InvalidArgument);
}

TEST(PshCone, MaNonnegativeForPsh) {
    for (int n = 1; n <= 3; ++n) {
        auto g = make_grid(n, 300);
        RadialFn v = sample(g, [](double s) { return std::pow(s, 3) + s - 2.0; });
        ASSERT_TRUE(in_psh_cone(v));
        auto m = ma_raw(v);
        for (int j = 0; j + 1 < g->size(); ++j) EXPECT_GE(m[j], -1e-10);
    }
}

TEST(Csv, RoundTripWithComments) {
    auto g = make_grid(2, 33);
    RadialFn v = sample(g, [](double s) { return std::sin(s) * (s - 1.0) / 3.0; });
    auto path = std::filesystem::temp_directory_path() / "cmalab_csv_roundtrip.csv";
    {
        std::ofstream os(path);
        os << "# provenance line\n";
        write_csv(os, v);
    }
    RadialFn r = read_csv(path.string(), g);
    EXPECT_EQ(r.values, v.values);
    auto other = make_grid(2, 34);
    EXPECT_THROW(read_csv(path.string(), other), InvalidArgument);
    std::filesystem::remove(path);
}
