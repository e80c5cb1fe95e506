#include "cmalab/radial_domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "cmalab/error.hpp"
#include "cmalab/isotonic.hpp"
#include "cmalab/ma_operator.hpp"
#include "cmalab/quadrature.hpp"

namespace cmalab {

Clustering parse_clustering(const std::string& name) {
    if (name == "uniform") return Clustering::uniform;
    if (name == "boundary_refined") return Clustering::boundary_refined;
    throw InvalidArgument("unknown clustering '" + name + "'");
}

std::string to_string(Clustering c) { return c == Clustering::uniform ? "uniform" : "boundary_refined"; }

BallDomain make_ball(int n) {
    if (n < 1) throw InvalidArgument("dimension n must be >= 1");
    BallDomain d;
    d.n = n;
    d.vol_const = n * std::pow(2.0 * std::numbers::pi, n);
    d.eps0 = 1.0;
    return d;
}

namespace {

Stencil make_stencil(const std::vector<double>& s, int first, int len, double x0, int order) {
    std::vector<double> xs(s.begin() + first, s.begin() + first + len);
    auto c = fornberg_weights(x0, xs, order);
    Stencil st;
    st.first = first;
    st.len = len;
    for (int k = 0; k < len; ++k) st.w[k] = c[order][k];
    return st;
}

// Slope weights L and quadrature weights q from the two moment conditions
//   L_i - L_{i-1} (+ origin) = n q_i,   mid_i L_i - mid_{i-1} L_{i-1} = (n+1) q_i s_i,
// which make the flux difference exact for v' in {1, s}.
void build_scheme(RadialGrid& g) {
    const int n = g.n(), N = g.size();
    const double alpha = (n + 1.0) / n;
    const auto& s = g.s;
    const auto& mid = g.mid;
    g.quad.assign(N, 0.0);
    g.slope_w.assign(N - 1, 0.0);
    g.d1_origin = g.d1_st[0];
    std::array<double, 3> A{-g.d1_origin.w[0], -g.d1_origin.w[1], -g.d1_origin.w[2]};

    const double L2 = 1.0;
    double A1 = n * mid[1] / ((n + 1) * s[1]) - 1.0;
    double B2 = n * mid[2] / ((n + 1) * s[2]) - 1.0;
    double B1 = 1.0 - n * mid[1] / ((n + 1) * s[2]);
    double L1 = L2 * B2 * A[1] / (A1 * A[2] - B1 * A[1]);
    double ow = L1 * A1 / A[1];
    if (std::abs(ow) < 1e-13 * std::abs(L1)) ow = 0.0;
    double q1 = mid[1] * L1 / ((n + 1) * s[1]);
    double q2 = (mid[2] * L2 - mid[1] * L1) / ((n + 1) * s[2]);
    double q0 = ow * A[0] / n;
    bool ok = std::isfinite(L1) && L1 > 0 && ow >= 0 && q0 >= 0 && q1 > 0 && q2 > 0;

    int start;
    if (ok) {
        g.flux_origin = true;
        g.var_start = 1;
        g.origin_w = ow;
        g.slope_w[1] = L1;
        g.slope_w[2] = L2;
        g.quad[0] = q0;
        g.quad[1] = q1;
        g.quad[2] = q2;
        start = 3;
    } else {
        int p = 1;
        while (p < N - 2 && alpha * s[p] - mid[p] < 0.25 * g.h[p]) ++p;
        if (p >= N - 3) throw InvalidArgument("grid too coarse for dimension " + std::to_string(n));
        g.flux_origin = false;
        g.var_start = p;
        g.origin_w = 0.0;
        double lo = 0.0;
        for (int i = 0; i < p; ++i) {
            g.quad[i] = (std::pow(mid[i], n) - std::pow(lo, n)) / n;
            lo = mid[i];
        }
        g.slope_w[p - 1] = std::pow(mid[p - 1], n);
        start = p;
    }
    for (int i = start; i <= N - 2; ++i) {
        double den = alpha * s[i] - mid[i];
        if (!(den > 0)) throw InvalidArgument("grid spacing too irregular near the origin");
        g.slope_w[i] = g.slope_w[i - 1] * (alpha * s[i] - mid[i - 1]) / den;
        g.quad[i] = (g.slope_w[i] - g.slope_w[i - 1]) / n;
    }
    double kappa = std::pow(mid[N - 2], n) / g.slope_w[N - 2];
    for (auto& L : g.slope_w) L *= kappa;
    for (int i = 0; i <= N - 2; ++i) g.quad[i] *= kappa;
    g.origin_w *= kappa;
    g.quad[N - 1] = (1.0 - std::pow(mid[N - 2], n)) / n;
}

}  // namespace

GridPtr make_grid(int n, int N, Clustering clustering) {
    if (N < 16) throw InvalidArgument("N = " + std::to_string(N) + " below minimum 16");
    auto g = std::make_shared<RadialGrid>();
    g->domain = make_ball(n);
    g->clustering = clustering;
    g->s.resize(N);
    for (int j = 0; j < N; ++j) {
        double xi = static_cast<double>(j) / (N - 1);
        g->s[j] = clustering == Clustering::uniform ? xi : xi + 0.85 * xi * (1.0 - xi);
    }
    g->s.front() = 0.0;
    g->s.back() = 1.0;
    g->h.resize(N - 1);
    g->mid.resize(N - 1);
    for (int j = 0; j + 1 < N; ++j) {
        g->h[j] = g->s[j + 1] - g->s[j];
        g->mid[j] = 0.5 * (g->s[j] + g->s[j + 1]);
    }
    g->h_min = *std::min_element(g->h.begin(), g->h.end());
    g->h_max = *std::max_element(g->h.begin(), g->h.end());

    g->d1_st.resize(N);
    g->d2_st.resize(N);
    const auto& s = g->s;
    g->d1_st[0] = make_stencil(s, 0, 3, s[0], 1);
    g->d2_st[0] = make_stencil(s, 0, 4, s[0], 2);
    for (int j = 1; j + 1 < N; ++j) {
        g->d1_st[j] = make_stencil(s, j - 1, 3, s[j], 1);
        g->d2_st[j] = make_stencil(s, j - 1, 3, s[j], 2);
    }
    g->d1_st[N - 1] = make_stencil(s, N - 3, 3, s[N - 1], 1);
    g->d2_st[N - 1] = make_stencil(s, N - 4, 4, s[N - 1], 2);

    build_scheme(*g);
    return g;
}

RadialFn::RadialFn(GridPtr g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    if (!grid) throw InvalidArgument("RadialFn: null grid");
    if (static_cast<int>(values.size()) != grid->size()) throw InvalidArgument("RadialFn: size does not match grid");
}

RadialFn::RadialFn(GridPtr g) : grid(std::move(g)) {
    if (!grid) throw InvalidArgument("RadialFn: null grid");
    values.assign(grid->size(), 0.0);
}

double RadialFn::sup_norm() const {
    double m = 0.0;
    for (double x : values) m = std::max(m, std::abs(x));
    return m;
}

double RadialFn::min() const { return *std::min_element(values.begin(), values.end()); }

namespace {
void check_same(const RadialFn& a, const RadialFn& b) {
    if (a.grid != b.grid) throw InvalidArgument("RadialFn: grids differ");
}
}  // namespace

RadialFn operator+(const RadialFn& a, const RadialFn& b) {
    check_same(a, b);
    RadialFn out(a.grid);
    for (int j = 0; j < a.size(); ++j) out.values[j] = a.values[j] + b.values[j];
    return out;
}

RadialFn operator-(const RadialFn& a, const RadialFn& b) {
    check_same(a, b);
    RadialFn out(a.grid);
    for (int j = 0; j < a.size(); ++j) out.values[j] = a.values[j] - b.values[j];
    return out;
}

RadialFn operator*(double c, const RadialFn& a) {
    RadialFn out(a.grid);
    for (int j = 0; j < a.size(); ++j) out.values[j] = c * a.values[j];
    return out;
}

namespace {
double apply(const Stencil& st, const std::vector<double>& v) {
    double acc = 0.0;
    for (int k = 0; k < st.len; ++k) acc += st.w[k] * v[st.first + k];
    return acc;
}
}  // namespace

std::vector<double> d1(const RadialFn& v) {
    std::vector<double> out(v.size());
    for (int j = 0; j < v.size(); ++j) out[j] = apply(v.grid->d1_st[j], v.values);
    return out;
}

std::vector<double> d2(const RadialFn& v) {
    std::vector<double> out(v.size());
    for (int j = 0; j < v.size(); ++j) out[j] = apply(v.grid->d2_st[j], v.values);
    return out;
}

std::vector<double> slopes(const RadialFn& v) {
    const auto& g = *v.grid;
    std::vector<double> out(g.size() - 1);
    for (int j = 0; j + 1 < g.size(); ++j) out[j] = (v.values[j + 1] - v.values[j]) / g.h[j];
    return out;
}

double d1_at_origin(const RadialFn& v) { return apply(v.grid->d1_origin, v.values); }

double integrate(const RadialGrid& g, const std::vector<double>& f) {
    if (static_cast<int>(f.size()) != g.size()) throw InvalidArgument("integrate: size does not match grid");
    double acc = 0.0;
    for (int j = 0; j < g.size(); ++j) {
        if (!std::isfinite(f[j])) throw InvalidArgument("integrate: non-finite value at node " + std::to_string(j));
        acc += g.quad[j] * f[j];
    }
    return g.domain.vol_const * acc;
}

double integrate(const RadialFn& f) { return integrate(*f.grid, f.values); }

namespace {

std::vector<double> floor_mass(const RadialGrid& g, double floor) {
    // floor^n C_i with C_i = n sum_{k<=i} q_k
    std::vector<double> out(g.size() - 1);
    double fn = std::pow(floor, g.n()), acc = 0.0;
    for (int i = 0; i + 1 < g.size(); ++i) {
        acc += g.n() * g.quad[i];
        out[i] = fn * acc;
    }
    return out;
}

}  // namespace

bool in_psh_cone(const RadialFn& v, double floor, double rel_tol) {
    const auto& g = *v.grid;
    const int M = g.size() - 1;  // nodes 0..M-1 carry equations
    auto m = ma_raw(v);
    auto W = cumulative_mass(g, m);
    auto S = slopes(v);
    double Smax = 1.0;
    for (double x : S) Smax = std::max(Smax, std::abs(x));
    double Wmax = 1.0;
    for (double x : W) Wmax = std::max(Wmax, std::abs(x));
    const double tolS = rel_tol * Smax, tolW = rel_tol * Wmax;
    for (double x : S)
        if (x < -tolS) return false;
    if (d1_at_origin(v) < floor - tolS) return false;
    auto fm = floor_mass(g, floor);
    double prev = 0.0;
    for (int i = 0; i < M; ++i) {
        if (W[i] < fm[i] - tolW) return false;
        if (W[i] - prev < -tolW) return false;
        prev = W[i];
    }
    // Nodes with zero quadrature weight are invisible to W.
    const double mtol = rel_tol * std::max(1.0, *std::max_element(m.begin(), m.end()));
    for (int i = 0; i < M; ++i)
        if (g.quad[i] == 0.0 && m[i] < std::pow(floor, g.n()) - mtol) return false;
    return true;
}

RadialFn psh_project(const RadialFn& v, double floor) {
    const auto& g = *v.grid;
    if (floor < 0) throw InvalidArgument("psh_project: floor must be nonnegative");
    if (std::abs(v.values.back()) > 1e-12) throw InvalidArgument("psh_project: requires v(1) = 0");
    if (in_psh_cone(v, floor)) return v;

    const int M = g.size() - 1;
    const int n = g.n();
    auto m = ma_raw(v);
    auto W = cumulative_mass(g, m);
    auto fm = floor_mass(g, floor);

    // Nodes with zero weight keep their own density and are excluded from the regression.
    std::vector<int> idx;
    std::vector<double> y, w;
    for (int i = 0; i < M; ++i)
        if (g.quad[i] > 0.0) {
            idx.push_back(i);
            y.push_back(W[i]);
            w.push_back(g.quad[i]);
        }
    auto fit = isotonic_regression(y, w);
    std::vector<double> Wn(M, 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k) Wn[idx[k]] = fit[k];
    double run = 0.0;
    for (int i = 0; i < M; ++i) {
        if (g.quad[i] > 0.0) run = std::max({Wn[i], fm[i], 0.0, run});
        Wn[i] = run;
    }
    std::vector<double> mn(M, 0.0);
    double prev = 0.0;
    const double fn = std::pow(floor, n);
    for (int i = 0; i < M; ++i) {
        if (g.quad[i] > 0.0) {
            mn[i] = std::max(0.0, (Wn[i] - prev) / (n * g.quad[i]));
            prev = Wn[i];
        } else {
            mn[i] = std::max(m[i], fn);
        }
    }
    return invert_density(v.grid, mn);
}

void write_csv(std::ostream& os, const RadialFn& v) {
    os << "s,value\n" << std::setprecision(17);
    for (int j = 0; j < v.size(); ++j) os << v.grid->s[j] << ',' << v.values[j] << '\n';
}

void write_csv(const std::string& path, const RadialFn& v) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_csv(os, v);
}

RadialFn read_csv(const std::string& path, const GridPtr& g) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open " + path);
    std::string line;
    while (std::getline(is, line) && line.rfind("#", 0) == 0) {
    }
    if (line.rfind("s,", 0) != 0) throw InvalidArgument(path + ": missing 's,value' header");
    RadialFn out(g);
    int j = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double s = 0, val = 0;
        char comma = 0;
        if (!(ls >> s >> comma >> val) || comma != ',') throw InvalidArgument(path + ": bad row " + std::to_string(j + 2));
        if (j >= g->size() || std::abs(s - g->s[j]) > 1e-12) throw InvalidArgument(path + ": nodes do not match grid");
        out.values[j++] = val;
    }
    if (j != g->size()) throw InvalidArgument(path + ": expected " + std::to_string(g->size()) + " rows");
    return out;
}

}  // namespace cmalab
