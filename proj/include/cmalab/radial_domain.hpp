#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace cmalab {

enum class Clustering { uniform, boundary_refined };

Clustering parse_clustering(const std::string& name);
std::string to_string(Clustering c);

/// Unit ball in C^n with the Euclidean Kahler form, seen through s = |z|^2.
/// Integrals of radial functions: int_Omega f(|z|^2) w^n = vol_const * int_0^1 f(s) s^{n-1} ds.
struct BallDomain {
    int n = 1;
    double vol_const = 0.0;  // n (2 pi)^n
    double eps0 = 1.0;       // radial complex Hessian of rho is the identity

    double rho_at(double s) const { return s - 1.0; }
    double volume() const { return vol_const / n; }
};

BallDomain make_ball(int n);

/// A few-point finite-difference stencil anchored at `first`.
struct Stencil {
    int first = 0;
    int len = 0;
    std::array<double, 4> w{};
};

/// Radial nodes 0 = s_0 < ... < s_{N-1} = 1 together with the discrete calculus on them.
///
/// The Monge-Ampere operator is discretized as a flux difference: with slopes
/// S_j = (v_{j+1} - v_j)/h_j and slope weights L_j ~ s_{j+1/2}^n,
///   n q_i MA_i = L_i S_i^n - L_{i-1} S_{i-1}^n (+ an origin term in S_*^n, S_* = v'(0)),
/// where q are the quadrature weights. L and q solve the two moment conditions per node, so MA
/// is second order, and  (n+1)^{-1} sum c_n q_i (-v_i) MA_i  has gradient  -c_n q_i MA_i  exactly.
/// When no such origin closure with nonnegative weights exists (n >= 3), the first few nodes use the
/// pointwise formula (v')^{n-1}(v' + s v'') instead.
struct RadialGrid {
    BallDomain domain;
    Clustering clustering = Clustering::uniform;
    std::vector<double> s;      // nodes
    std::vector<double> h;      // h_j = s_{j+1} - s_j
    std::vector<double> mid;    // s_{j+1/2}
    std::vector<double> quad;   // quadrature weights for int_0^1 . s^{n-1} ds
    std::vector<double> slope_w;  // L_j
    double h_min = 0.0, h_max = 0.0;

    // Origin closure.
    bool flux_origin = true;   // false: pointwise nodes [0, var_start)
    int var_start = 1;         // first node using the flux difference
    double origin_w = 0.0;     // weight of the S_*^n term
    Stencil d1_origin;         // S_* = sum w v

    std::vector<Stencil> d1_st, d2_st;

    int n() const { return domain.n; }
    int size() const { return static_cast<int>(s.size()); }
    int last() const { return size() - 1; }
    double h_typ() const { return 1.0 / (size() - 1); }
};

using GridPtr = std::shared_ptr<const RadialGrid>;

/// Build a grid. N >= 16.
GridPtr make_grid(int n, int N, Clustering clustering = Clustering::uniform);

/// A radial potential sampled on a grid.
struct RadialFn {
    GridPtr grid;
    std::vector<double> values;

    RadialFn() = default;
    RadialFn(GridPtr g, std::vector<double> v);
    explicit RadialFn(GridPtr g);  // zeros

    int size() const { return static_cast<int>(values.size()); }
    double operator[](int j) const { return values[j]; }
    double& operator[](int j) { return values[j]; }
    double sup_norm() const;
    double min() const;
};

/// Sample f at the grid nodes.
template <class F>
RadialFn sample(const GridPtr& g, F&& f) {
    RadialFn out(g);
    for (int j = 0; j < g->size(); ++j) out.values[j] = f(g->s[j]);
    return out;
}

RadialFn operator+(const RadialFn& a, const RadialFn& b);
RadialFn operator-(const RadialFn& a, const RadialFn& b);
RadialFn operator*(double c, const RadialFn& a);

std::vector<double> d1(const RadialFn& v);
std::vector<double> d2(const RadialFn& v);
std::vector<double> slopes(const RadialFn& v);
double d1_at_origin(const RadialFn& v);

/// c_n sum_j q_j f_j. Throws on non-finite input.
double integrate(const RadialGrid& g, const std::vector<double>& f);
double integrate(const RadialFn& f);

/// Cone test: MA >= 0 at nodes 0..N-2, nonnegative slopes, and the cumulative floor
/// W_i >= floor^n C_i, where W_i = n sum_{k<=i} q_k MA_k and C_i = n sum_{k<=i} q_k.
/// In the flux region W_i = L_i S_i^n and C_i = L_i, so the floor reads v' >= floor.
bool in_psh_cone(const RadialFn& v, double floor = 0.0, double rel_tol = 1e-10);

/// Projection onto the cone above: isotonic regression of W with weights q, clamp at the floor,
/// then exact reconstruction of the potential with v(1) = 0. Returns v untouched when it is
/// already in the cone, which makes the map idempotent.
RadialFn psh_project(const RadialFn& v, double floor = 0.0);

void write_csv(std::ostream& os, const RadialFn& v);
void write_csv(const std::string& path, const RadialFn& v);
/// Read an `s,value` CSV (leading `#` lines are skipped); nodes must match the grid within 1e-12.
RadialFn read_csv(const std::string& path, const GridPtr& g);

}  // namespace cmalab
