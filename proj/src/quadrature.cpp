#include "cmalab/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace cmalab {

GaussRule gauss_legendre(int order) {
    if (order < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
    GaussRule rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    for (int i = 0; i < order; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= order; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = order * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        rule.nodes[i] = x;
        rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

namespace {
const GaussRule& cached_rule(int order) {
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, gauss_legendre(order)).first;
    return it->second;
}

struct SimpsonPanel {
    double a, b, fa, fm, fb, whole;
};

double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

void simpson_recurse(const std::function<double(double)>& f, const SimpsonPanel& p, double tol, int depth,
                     AdaptiveResult& out) {
    double m = 0.5 * (p.a + p.b);
    double lm = 0.5 * (p.a + m), rm = 0.5 * (m + p.b);
    double flm = f(lm), frm = f(rm);
    out.evaluations += 2;
    double left = simpson(p.a, m, p.fa, flm, p.fm);
    double right = simpson(m, p.b, p.fm, frm, p.fb);
    double delta = left + right - p.whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        if (depth <= 0 && std::abs(delta) > 15.0 * tol) out.converged = false;
        out.value += left + right + delta / 15.0;
        out.error_estimate += std::abs(delta) / 15.0;
        return;
    }
    simpson_recurse(f, {p.a, m, p.fa, flm, p.fm, left}, 0.5 * tol, depth - 1, out);
    simpson_recurse(f, {m, p.b, p.fm, frm, p.fb, right}, 0.5 * tol, depth - 1, out);
}
}  // namespace

double gauss_integrate(const std::function<double(double)>& f, double a, double b, int order) {
    const GaussRule& r = cached_rule(order);
    double half = 0.5 * (b - a), mid = 0.5 * (a + b), acc = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) acc += r.weights[i] * f(mid + half * r.nodes[i]);
    return acc * half;
}

AdaptiveResult adaptive_simpson(const std::function<double(double)>& f, double a, double b, double rel_tol,
                                double abs_tol, int max_depth) {
    AdaptiveResult out;
    if (a == b) return out;
    // A coarse pass fixes the scale for the relative tolerance.
    constexpr int kPanels = 8;
    std::vector<double> xs(2 * kPanels + 1), fs(2 * kPanels + 1);
    for (int i = 0; i <= 2 * kPanels; ++i) {
        xs[i] = a + (b - a) * i / (2.0 * kPanels);
        fs[i] = f(xs[i]);
    }
    out.evaluations = 2 * kPanels + 1;
    double coarse = 0.0;
    for (int k = 0; k < kPanels; ++k) coarse += simpson(xs[2 * k], xs[2 * k + 2], fs[2 * k], fs[2 * k + 1], fs[2 * k + 2]);
    double tol = std::max(abs_tol, rel_tol * std::abs(coarse)) / kPanels;
    for (int k = 0; k < kPanels; ++k) {
        SimpsonPanel p{xs[2 * k], xs[2 * k + 2], fs[2 * k], fs[2 * k + 1], fs[2 * k + 2],
                       simpson(xs[2 * k], xs[2 * k + 2], fs[2 * k], fs[2 * k + 1], fs[2 * k + 2])};
        simpson_recurse(f, p, tol, max_depth, out);
    }
    return out;
}

std::vector<std::vector<double>> fornberg_weights(double x0, const std::vector<double>& x, int max_order) {
    const int n = static_cast<int>(x.size());
    std::vector<std::vector<double>> c(max_order + 1, std::vector<double>(n, 0.0));
    double c1 = 1.0, c4 = x[0] - x0;
    c[0][0] = 1.0;
    for (int i = 1; i < n; ++i) {
        int mn = std::min(i, max_order);
        double c2 = 1.0, c5 = c4;
        c4 = x[i] - x0;
        for (int j = 0; j < i; ++j) {
            double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    return c;
}

}  // namespace cmalab
