#include "cmalab/ma_operator.hpp"

#include <algorithm>
#include <cmath>

#include "cmalab/error.hpp"
#include "cmalab/quadrature.hpp"

namespace cmalab {

namespace {

// Signed power: negative slopes produce negative mass for every n, so the cone test sees them.
double spow(double x, int n) {
    double a = std::abs(x), r = 1.0;
    for (int k = 0; k < n; ++k) r *= a;
    return x < 0 ? -r : r;
}

double apow(double x, int n) {  // |x|^n
    double a = std::abs(x), r = 1.0;
    for (int k = 0; k < n; ++k) r *= a;
    return r;
}

double apply(const Stencil& st, const std::vector<double>& v) {
    double acc = 0.0;
    for (int k = 0; k < st.len; ++k) acc += st.w[k] * v[st.first + k];
    return acc;
}

double pointwise(const RadialGrid& g, const std::vector<double>& v, int i) {
    const int n = g.n();
    double a = apply(g.d1_st[i], v), b = apply(g.d2_st[i], v);
    return apow(a, n - 1) * (a + g.s[i] * b);
}

// Pointwise MA with stencils fixed to the scheme's interior choice (3-point, centered for i >= 1).
double pointwise_node(const RadialGrid& g, const std::vector<double>& v, int i) {
    if (i == 0) return spow(apply(g.d1_origin, v), g.n());
    return pointwise(g, v, i);
}

}  // namespace

std::vector<double> ma_raw(const RadialFn& vf) {
    const RadialGrid& g = *vf.grid;
    const auto& v = vf.values;
    const int N = g.size(), n = g.n();
    std::vector<double> m(N, 0.0);
    std::vector<double> P(N - 1);  // L_j S_j^[n]
    for (int j = 0; j + 1 < N; ++j) P[j] = g.slope_w[j] * spow((v[j + 1] - v[j]) / g.h[j], n);
    const double Sst = apply(g.d1_origin, v);
    const double Sn = spow(Sst, n);
    m[0] = Sn;
    if (g.flux_origin) {
        for (int i = 1; i <= N - 2; ++i) {
            double t = P[i] - (i >= 2 ? P[i - 1] : 0.0);
            if (i <= 2) t += g.origin_w * (-g.d1_origin.w[i]) * Sn;
            m[i] = t / (n * g.quad[i]);
        }
    } else {
        for (int i = 1; i < g.var_start; ++i) m[i] = pointwise_node(g, v, i);
        for (int i = g.var_start; i <= N - 2; ++i) m[i] = (P[i] - P[i - 1]) / (n * g.quad[i]);
    }
    m[N - 1] = pointwise(g, v, N - 1);
    return m;
}

std::vector<double> cumulative_mass(const RadialGrid& g, const std::vector<double>& m) {
    const int M = g.size() - 1;
    std::vector<double> W(M);
    double acc = 0.0;
    for (int i = 0; i < M; ++i) {
        acc += g.n() * g.quad[i] * m[i];
        W[i] = acc;
    }
    return W;
}

BandMatrix ma_jacobian(const RadialFn& vf) {
    const RadialGrid& g = *vf.grid;
    const auto& v = vf.values;
    const int N = g.size(), n = g.n(), M = N - 1;
    BandMatrix J(M, 2, 2);
    auto add = [&](int i, int k, double val) {
        if (k < M) J(i, k) += val;  // column N-1 is the pinned boundary value
    };
    std::vector<double> D(N - 1);  // d(L_j S_j^[n]) / dS_j
    for (int j = 0; j + 1 < N; ++j) D[j] = g.slope_w[j] * n * apow((v[j + 1] - v[j]) / g.h[j], n - 1);
    const double Sst = apply(g.d1_origin, v);
    const double dSn = n * apow(Sst, n - 1);
    for (int k = 0; k < g.d1_origin.len; ++k) add(0, g.d1_origin.first + k, dSn * g.d1_origin.w[k]);

    auto flux_row = [&](int i, bool with_prev) {
        double c = 1.0 / (n * g.quad[i]);
        add(i, i + 1, c * D[i] / g.h[i]);
        add(i, i, -c * D[i] / g.h[i]);
        if (with_prev) {
            add(i, i, -c * D[i - 1] / g.h[i - 1]);
            add(i, i - 1, c * D[i - 1] / g.h[i - 1]);
        }
    };
    auto pointwise_row = [&](int i) {
        const Stencil& s1 = g.d1_st[i];
        const Stencil& s2 = g.d2_st[i];
        double a = apply(s1, v), b = apply(s2, v);
        double pa = apow(a, n - 1);
        double dpa = n >= 2 ? (n - 1) * apow(a, n - 2) * (a < 0 ? -1.0 : 1.0) : 0.0;
        double inner = a + g.s[i] * b;
        for (int k = 0; k < s1.len; ++k) add(i, s1.first + k, (dpa * inner + pa) * s1.w[k]);
        for (int k = 0; k < s2.len; ++k) add(i, s2.first + k, pa * g.s[i] * s2.w[k]);
    };

    if (g.flux_origin) {
        for (int i = 1; i <= N - 2; ++i) {
            flux_row(i, i >= 2);
            if (i <= 2) {
                double c = g.origin_w * (-g.d1_origin.w[i]) * dSn / (n * g.quad[i]);
                for (int k = 0; k < g.d1_origin.len; ++k) add(i, g.d1_origin.first + k, c * g.d1_origin.w[k]);
            }
        }
    } else {
        for (int i = 1; i < g.var_start; ++i) pointwise_row(i);
        for (int i = g.var_start; i <= N - 2; ++i) flux_row(i, true);
    }
    return J;
}

namespace {

// Hybrid inverse: the flux region is explicit once the base slope S_{p-1} is known; the
// pointwise nodes 0..p-1 are matched by a small damped Newton solve in (S_{p-1}, v_0..v_{p-2}).
RadialFn invert_hybrid(const GridPtr& gp, const std::vector<double>& m) {
    const RadialGrid& g = *gp;
    const int N = g.size(), n = g.n(), p = g.var_start;
    std::vector<double> tail(N - 1, 0.0);  // sum_{k=p}^{j} n q_k m_k
    double acc = 0.0;
    for (int j = p; j <= N - 2; ++j) {
        acc += n * g.quad[j] * m[j];
        tail[j] = acc;
    }
    auto build = [&](const std::vector<double>& z) {
        std::vector<double> v(N, 0.0);
        double base = g.slope_w[p - 1] * apow(std::max(z[0], 0.0), n);
        for (int j = N - 2; j >= p - 1; --j) {
            double Wj = base + (j >= p ? tail[j] : 0.0);
            double S = std::pow(std::max(Wj, 0.0) / g.slope_w[j], 1.0 / n);
            v[j] = v[j + 1] - g.h[j] * S;
        }
        for (int j = 0; j < p - 1; ++j) v[j] = z[1 + j];
        return v;
    };
    auto resid = [&](const std::vector<double>& z) {
        auto v = build(z);
        std::vector<double> r(p);
        for (int i = 0; i < p; ++i) r[i] = pointwise_node(g, v, i) - m[i];
        return r;
    };
    std::vector<double> padded(m.begin(), m.begin() + (N - 1));
    padded.push_back(m[N - 2]);
    auto guess = flux_formula_inverse(gp, padded).values;
    std::vector<double> z(p);
    z[0] = std::max((guess[p] - guess[p - 1]) / g.h[p - 1], 0.0);
    for (int j = 0; j < p - 1; ++j) z[1 + j] = guess[j];

    double mscale = 1.0;
    for (int i = 0; i <= N - 2; ++i) mscale = std::max(mscale, std::abs(m[i]));
    auto norm = [](const std::vector<double>& r) {
        double x = 0;
        for (double t : r) x = std::max(x, std::abs(t));
        return x;
    };
    // Zero mass next to the origin is solved exactly by a flat block, where Newton only creeps.
    std::vector<double> flat(p, 0.0);
    {
        double top = build(flat)[p - 1];
        for (int j = 0; j < p - 1; ++j) flat[1 + j] = top;
    }
    auto rflat = resid(flat);
    auto r = resid(z);
    if (norm(rflat) <= 1e-13 * mscale) {
        z = flat;
        r = rflat;
    }
    for (int it = 0; it < 100 && norm(r) > 1e-13 * mscale; ++it) {
        std::vector<double> Jm(p * p);
        for (int c = 0; c < p; ++c) {
            auto zp = z;
            double step = 1e-7 * (1.0 + std::abs(z[c]));
            zp[c] += step;
            auto rp = resid(zp);
            for (int rr = 0; rr < p; ++rr) Jm[rr * p + c] = (rp[rr] - r[rr]) / step;
        }
        // Small dense solve (Gaussian elimination with partial pivoting, light regularization).
        std::vector<double> A = Jm, b(p);
        for (int i = 0; i < p; ++i) {
            b[i] = -r[i];
            A[i * p + i] += 1e-14 * mscale;
        }
        for (int k = 0; k < p; ++k) {
            int piv = k;
            for (int i = k + 1; i < p; ++i)
                if (std::abs(A[i * p + k]) > std::abs(A[piv * p + k])) piv = i;
            for (int c = 0; c < p; ++c) std::swap(A[k * p + c], A[piv * p + c]);
            std::swap(b[k], b[piv]);
            if (A[k * p + k] == 0.0) throw NumericalError("invert_density", "singular origin system");
            for (int i = k + 1; i < p; ++i) {
                double f = A[i * p + k] / A[k * p + k];
                for (int c = k; c < p; ++c) A[i * p + c] -= f * A[k * p + c];
                b[i] -= f * b[k];
            }
        }
        std::vector<double> dz(p);
        for (int k = p - 1; k >= 0; --k) {
            double t = b[k];
            for (int c = k + 1; c < p; ++c) t -= A[k * p + c] * dz[c];
            dz[k] = t / A[k * p + k];
        }
        double lam = 1.0, r0 = norm(r);
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, lam *= 0.5) {
            auto zt = z;
            for (int k = 0; k < p; ++k) zt[k] += lam * dz[k];
            zt[0] = std::max(zt[0], 0.0);
            auto rt = resid(zt);
            if (norm(rt) < r0) {
                z = zt;
                r = rt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (norm(rflat) < norm(r)) {
        z = flat;
        r = rflat;
    }
    if (norm(r) > 1e-9 * mscale) throw NumericalError("invert_density", "origin block did not converge");
    // With (near) zero mass at the origin the pointwise equations only see |v'|, and Newton may
    // settle on a slightly decreasing branch; the flat block solves them equally well.
    auto v = build(z);
    bool decreasing = false;
    for (int j = 0; j + 1 < p; ++j) decreasing = decreasing || v[j] > v[j + 1];
    if (decreasing)
        for (int j = 0; j + 1 < p; ++j) v[j] = v[p - 1];
    return RadialFn(gp, std::move(v));
}

}  // namespace

RadialFn invert_density(const GridPtr& gp, const std::vector<double>& m) {
    const RadialGrid& g = *gp;
    const int N = g.size(), n = g.n();
    if (static_cast<int>(m.size()) < N - 1) throw InvalidArgument("invert_density: density too short");
    for (int i = 0; i <= N - 2; ++i)
        if (!(m[i] >= 0.0) || !std::isfinite(m[i])) throw InvalidArgument("invert_density: negative or non-finite density");
    if (!g.flux_origin) return invert_hybrid(gp, m);

    auto W = cumulative_mass(g, m);
    std::vector<double> v(N, 0.0);
    for (int j = N - 2; j >= 2; --j) {
        double S = std::pow(std::max(W[j], 0.0) / g.slope_w[j], 1.0 / n);
        v[j] = v[j + 1] - g.h[j] * S;
    }
    const double Sst = std::pow(m[0], 1.0 / n);
    const double Sn = apow(Sst, n);
    const auto& w = g.d1_origin.w;
    double r1 = W[1] + g.origin_w * (w[0] + w[1]) * Sn;  // L_1 S_1^n
    double S1 = std::pow(std::max(r1, 0.0) / g.slope_w[1], 1.0 / n);
    v[1] = v[2] - g.h[1] * S1;
    v[0] = (Sst - w[1] * v[1] - w[2] * v[2]) / w[0];
    return RadialFn(gp, std::move(v));
}

RadialFn flux_formula_inverse(const GridPtr& gp, const std::vector<double>& gv) {
    const RadialGrid& g = *gp;
    const int N = g.size(), n = g.n();
    if (static_cast<int>(gv.size()) < N) throw InvalidArgument("solve_radial_ma: density size does not match grid");
    for (int j = 0; j < N; ++j)
        if (!(gv[j] >= 0.0) || !std::isfinite(gv[j]))
            throw InvalidArgument("solve_radial_ma: negative or non-finite density at node " + std::to_string(j));
    const int order = n / 2 + 2;
    GaussRule rule = gauss_legendre(order);
    std::vector<double> F(N, 0.0);
    for (int j = 0; j + 1 < N; ++j) {
        double a = g.s[j], b = g.s[j + 1], half = 0.5 * (b - a), c = 0.5 * (a + b), acc = 0.0;
        for (int k = 0; k < order; ++k) {
            double t = c + half * rule.nodes[k];
            double gl = gv[j] + (gv[j + 1] - gv[j]) * (t - a) / (b - a);
            acc += rule.weights[k] * gl * std::pow(t, n - 1);
        }
        F[j + 1] = F[j] + n * half * acc;
    }
    std::vector<double> vp(N);
    vp[0] = std::pow(gv[0], 1.0 / n);
    for (int j = 1; j < N; ++j) vp[j] = std::pow(std::max(F[j], 0.0), 1.0 / n) / g.s[j];
    std::vector<double> v(N, 0.0);
    for (int j = N - 2; j >= 0; --j) v[j] = v[j + 1] - g.h[j] * 0.5 * (vp[j] + vp[j + 1]);
    return RadialFn(gp, std::move(v));
}

}  // namespace cmalab
