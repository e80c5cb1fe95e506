#pragma once

// Reference computations that share no code with the library.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

// J0 from its power series, summed until the terms stop mattering.
inline double j0_series(double x) {
    double term = 1.0, sum = 1.0;
    const double q = 0.25 * x * x;
    for (int k = 1; k < 300; ++k) {
        term *= -q / (double(k) * double(k));
        sum += term;
        if (std::abs(term) <= 1e-20 * std::abs(sum)) break;
    }
    return sum;
}

// First positive zero of J0 by bisection on [2, 3] (J0(2) > 0 > J0(3)).
inline double j0_first_zero() {
    double lo = 2.0, hi = 3.0;
    while (hi - lo > 1e-15) {
        double mid = 0.5 * (lo + hi);
        (j0_series(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Volume of the unit disc for the form i dz ^ dzbar = 2 dx ^ dy, by hit-or-miss sampling.
inline double disc_volume_monte_carlo(long samples, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    long hits = 0;
    for (long k = 0; k < samples; ++k) {
        double x = U(rng), y = U(rng);
        if (x * x + y * y <= 1.0) ++hits;
    }
    return 2.0 * 4.0 * double(hits) / double(samples);
}

// Weighted isotonic regression by the max-min formula
//   x_i = max_{j <= i} min_{k >= i} mean_w(y_j..y_k),
// O(n^3) and independent of any pooling logic.
inline std::vector<double> isotonic_maxmin(const std::vector<double>& y, const std::vector<double>& w) {
    const int n = int(y.size());
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        double best = -INFINITY;
        for (int j = 0; j <= i; ++j) {
            double worst = INFINITY;
            for (int k = i; k < n; ++k) {
                double sw = 0.0, sy = 0.0;
                for (int l = j; l <= k; ++l) {
                    sw += w[l];
                    sy += w[l] * y[l];
                }
                worst = std::min(worst, sy / sw);
            }
            best = std::max(best, worst);
        }
        out[i] = best;
    }
    return out;
}

// Exhaustive search over all splittings of 0..n-1 into consecutive blocks (n <= 12).
inline std::vector<double> isotonic_brute(const std::vector<double>& y, const std::vector<double>& w) {
    const int n = int(y.size());
    double best_err = INFINITY;
    std::vector<double> best;
    for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
        std::vector<double> fit(n);
        int start = 0;
        double prev = -INFINITY;
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
            bool cut = i == n - 1 || (mask >> i & 1u);
            if (!cut) continue;
            double sw = 0.0, sy = 0.0;
            for (int l = start; l <= i; ++l) {
                sw += w[l];
                sy += w[l] * y[l];
            }
            double m = sy / sw;
            if (m < prev - 1e-14) ok = false;
            for (int l = start; l <= i; ++l) fit[l] = m;
            prev = m;
            start = i + 1;
        }
        if (!ok) continue;
        double err = 0.0;
        for (int i = 0; i < n; ++i) err += w[i] * (fit[i] - y[i]) * (fit[i] - y[i]);
        if (err < best_err) {
            best_err = err;
            best = fit;
        }
    }
    return best;
}

// Richardson ratio of errors at h and h/2.
inline double richardson_ratio(double err_h, double err_half) { return err_h / err_half; }

}  // namespace oracle
