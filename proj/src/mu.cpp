#include "cmalab/mu.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <random>

#include "cmalab/error.hpp"
#include "cmalab/quadrature.hpp"

namespace cmalab {

namespace {

constexpr int kGaussOrder = 12;
constexpr int kPanelsNear = 64;   // on [0, 2 eps]
constexpr int kPanelsFar = 512;   // on [2 eps, 2]

// C-infinity step: 0 for x <= 0, 1 for x >= 1.
double step(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return 1.0 / (1.0 + std::exp(1.0 / x - 1.0 / (1.0 - x)));
}

double step_d1(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    double S = step(x);
    return S * (1.0 - S) * (1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x)));
}

const GaussRule& rule() {
    static const GaussRule r = gauss_legendre(kGaussOrder);
    return r;
}

template <class F>
double gauss(F&& f, double a, double b) {
    const GaussRule& r = rule();
    double half = 0.5 * (b - a), mid = 0.5 * (a + b), acc = 0.0;
    for (int i = 0; i < kGaussOrder; ++i) acc += r.weights[i] * f(mid + half * r.nodes[i]);
    return acc * half;
}

}  // namespace

MuFunction MuFunction::log_branch() { return MuFunction(); }

double MuFunction::t_high() const { return is_log() ? kInf : std::exp(2.0); }

double MuFunction::phi(double s) const {
    if (is_log()) return std::exp(-s);
    if (s <= 0.0) return std::exp(-s / p_);
    double out;
    if (s >= knot_) {
        out = 1.0 / p_;
    } else {
        double H = step(s / (2.0 * eps_));
        double phi0 = (1.0 - H) * std::exp(-s / p_) + H * (1.0 - eps_);
        double R = step((s - (knot_ - ramp_)) / ramp_);
        out = (1.0 - R) * phi0 + R / p_;
    }
    if (fault_ != 0.0) {
        double u = (s - 0.6) / 0.8;
        double S = step(u);
        out += fault_ * 4.0 * S * (1.0 - S);
    }
    return out;
}

double MuFunction::phi_d1(double s) const {
    if (is_log()) return -std::exp(-s);
    if (s <= 0.0) return -std::exp(-s / p_) / p_;
    double out = 0.0;
    if (s < knot_) {
        double x = s / (2.0 * eps_);
        double H = step(x), dH = step_d1(x) / (2.0 * eps_);
        double e = std::exp(-s / p_);
        double phi0 = (1.0 - H) * e + H * (1.0 - eps_);
        double dphi0 = -dH * e - (1.0 - H) * e / p_ + dH * (1.0 - eps_);
        double y = (s - (knot_ - ramp_)) / ramp_;
        double R = step(y), dR = step_d1(y) / ramp_;
        out = -dR * phi0 + (1.0 - R) * dphi0 + dR / p_;
    }
    if (fault_ != 0.0) {
        double u = (s - 0.6) / 0.8;
        double S = step(u), dS = step_d1(u) / 0.8;
        out += fault_ * 4.0 * (1.0 - 2.0 * S) * dS;
    }
    return out;
}

void MuFunction::build_table() {
    table_s_.clear();
    table_tau_.clear();
    const double a = 2.0 * eps_;
    for (int k = 0; k <= kPanelsNear; ++k) table_s_.push_back(a * k / kPanelsNear);
    for (int k = 1; k <= kPanelsFar; ++k) table_s_.push_back(a + (2.0 - a) * k / kPanelsFar);
    table_s_.back() = 2.0;
    table_tau_.assign(table_s_.size(), 0.0);
    auto integrand = [this](double x) { return std::exp(x / p_) * phi(x); };
    for (std::size_t k = 1; k < table_s_.size(); ++k)
        table_tau_[k] = table_tau_[k - 1] + gauss(integrand, table_s_[k - 1], table_s_[k]);
}

MuFunction MuFunction::build(double p, double epsilon, double ramp) {
    if (!(p > 2.0)) throw InvalidArgument("build_mu: p must exceed 2");
    MuFunction mu;
    if (!(p < kInf)) return mu;
    if (!(epsilon > 0.0 && epsilon < 0.1)) throw InvalidArgument("build_mu: epsilon must lie in (0, 0.1)");
    if (!(ramp > 0.0 && ramp < 1.0)) throw InvalidArgument("build_mu: ramp width must lie in (0, 1)");
    if (!(1.0 - epsilon > 1.0 / p)) throw InvalidArgument("build_mu: epsilon too large for this p");
    mu.p_ = p;
    mu.eps_ = epsilon;
    mu.ramp_ = ramp;
    const double target = std::exp(2.0 / p);
    auto integral_at = [&](double knot) {
        mu.knot_ = knot;
        mu.build_table();
        return mu.table_tau_.back();
    };
    double lo = 2.0 * epsilon + ramp, hi = 2.0;
    double f_lo = integral_at(lo), f_hi = integral_at(hi);
    if (!(f_lo < target && f_hi > target))
        throw NumericalError("build_mu", "bisection bracket failure: integral(knot=" + std::to_string(lo) + ") = " +
                                             std::to_string(f_lo) + ", integral(knot=2) = " + std::to_string(f_hi) +
                                             ", target " + std::to_string(target));
    // Keep the knot on the low side so tau(2-) <= e^{2/p}: mu - t^{1/p} then stays nondecreasing
    // through s = 2 despite rounding in the table.
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        double mid = 0.5 * (lo + hi);
        (integral_at(mid) < target ? lo : hi) = mid;
    }
    double f_lo_final = integral_at(lo);
    if (std::abs(f_lo_final - target) > 1e-10)
        throw NumericalError("build_mu", "bisection stalled at |integral - e^{2/p}| = " + std::to_string(std::abs(f_lo_final - target)));
    return mu;
}

MuFunction MuFunction::with_fault(double amplitude) const {
    MuFunction out = *this;
    if (out.is_log()) return out;
    out.fault_ = amplitude;
    out.build_table();
    return out;
}

double MuFunction::condition_iv_integral() const {
    if (is_log()) return 1.0;
    return table_tau_.back();
}

double MuFunction::tau(double s) const {
    if (is_log() || s <= 0.0) return s;
    if (s >= 2.0) return std::exp(s / p_);
    auto it = std::upper_bound(table_s_.begin(), table_s_.end(), s);
    std::size_t k = static_cast<std::size_t>(it - table_s_.begin()) - 1;
    double a = table_s_[k];
    if (s == a) return table_tau_[k];
    return table_tau_[k] + gauss([this](double x) { return std::exp(x / p_) * phi(x); }, a, s);
}

double MuFunction::tau_d1(double s) const {
    if (is_log() || s <= 0.0) return 1.0;
    if (s >= 2.0) return std::exp(s / p_) / p_;
    return std::exp(s / p_) * phi(s);
}

double MuFunction::tau_d2(double s) const {
    if (is_log() || s <= 0.0) return 0.0;
    if (s >= 2.0) return std::exp(s / p_) / (p_ * p_);
    return std::exp(s / p_) * (phi(s) / p_ + phi_d1(s));
}

double MuFunction::value(double t) const {
    if (!(t > 0.0)) throw InvalidArgument("mu: argument must be positive");
    if (is_log()) return std::log(t);
    if (t >= std::exp(2.0)) return std::pow(t, 1.0 / p_);
    return tau(std::log(t));
}

double MuFunction::d1(double t) const {
    if (!(t > 0.0)) throw InvalidArgument("mu': argument must be positive");
    return tau_d1(std::log(t)) / t;
}

double MuFunction::d2(double t) const {
    if (!(t > 0.0)) throw InvalidArgument("mu'': argument must be positive");
    double s = std::log(t);
    return (tau_d2(s) - tau_d1(s)) / (t * t);
}

double MuFunction::inverse(double y) const {
    if (!std::isfinite(y)) throw InvalidArgument("mu inverse: non-finite value");
    if (is_log() || y <= 0.0) {
        double t = std::exp(y);
        if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("mu inverse: value outside the range of mu");
        return t;
    }
    double top = std::exp(2.0 / p_);
    if (y >= top) {
        double t = std::pow(y, p_);
        if (!std::isfinite(t)) throw InvalidArgument("mu inverse: value outside the range of mu");
        return t;
    }
    double lo = 0.0, hi = 2.0, s = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        s = 0.5 * (lo + hi);
        (tau(s) < y ? lo : hi) = s;
    }
    return std::exp(0.5 * (lo + hi));
}

SlopePair slope_lower(const MuFunction& mu, double t1, double t2) {
    if (!(t1 > 0.0 && t2 > 0.0)) throw InvalidArgument("slope_lower: arguments must be positive");
    SlopePair r;
    r.lhs = (t1 - t2) * (mu(t1) - mu(t2));
    double ip = mu.is_log() ? 0.0 : 1.0 / mu.p();
    r.rhs = (t1 - t2) * (std::pow(t1, ip) - std::pow(t2, ip));
    return r;
}

double concavity_check(const MuFunction& mu, int n, const std::vector<double>& lambda, const std::vector<double>& xi) {
    if (n < 1 || static_cast<int>(lambda.size()) != n || static_cast<int>(xi.size()) != n)
        throw InvalidArgument("concavity_check: lambda and xi must have n entries");
    if (!mu.is_log() && mu.p() < n) throw InvalidArgument("concavity_check: requires p >= n");
    double MA = 1.0;
    for (double l : lambda) {
        if (!(l > 0.0)) throw InvalidArgument("concavity_check: lambda must be positive");
        MA *= l;
    }
    double m1 = mu.d1(MA), m2 = mu.d2(MA);
    double lin = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double r = xi[i] / lambda[i];
        lin += r;
        sq += r * r;
    }
    return (m2 * MA * MA + m1 * MA) * lin * lin - m1 * MA * sq;
}

bool MuCertificate::all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const Item& i) { return i.pass; });
}

std::string MuCertificate::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& i : items)
        j.push_back({{"property", i.name}, {"pass", i.pass}, {"slack", i.slack}, {"samples", i.samples}});
    return j.dump(2);
}

MuCertificate certify_mu(const MuFunction& mu, long dense, long pairs, long forms, unsigned seed) {
    MuCertificate cert;
    const bool lg = mu.is_log();
    const double ip = lg ? 0.0 : 1.0 / mu.p();
    auto add = [&](std::string name, double slack, long samples) {
        cert.items.push_back({std::move(name), slack >= 0.0, slack, samples});
    };

    {  // branch values
        const double e2 = std::exp(2.0);
        double worst = 0.0;
        worst = std::max(worst, std::abs(mu(0.5) - std::log(0.5)));
        worst = std::max(worst, std::abs(mu(1.0)));
        if (lg) {
            worst = std::max(worst, std::abs(mu(e2) - 2.0));
            worst = std::max(worst, std::abs(mu(20.0) - std::log(20.0)));
        } else {
            worst = std::max(worst, std::abs(mu(e2) - std::exp(2.0 * ip)));
            worst = std::max(worst, std::abs(mu(20.0) - std::pow(20.0, ip)));
        }
        add("branch_values", 1e-10 - worst, 4);
    }
    {  // dense log-spaced samples on [1e-4, 1e4]
        double min_d1 = MuFunction::kInf, worst_ineq = -MuFunction::kInf, worst_lower = MuFunction::kInf;
        for (long k = 0; k < dense; ++k) {
            double t = std::pow(10.0, -4.0 + 8.0 * k / std::max(dense - 1, 1L));
            double m1 = mu.d1(t), m2 = mu.d2(t);
            min_d1 = std::min(min_d1, m1);
            worst_ineq = std::max(worst_ineq, t * t * m2 + t * m1 - t * ip * m1);
            if (!lg) worst_lower = std::min(worst_lower, m1 - ip * std::pow(t, ip - 1.0) * (1.0 - 1e-12));
        }
        add("mu_prime_positive", min_d1 > 0.0 ? min_d1 : -1.0, dense);
        add("differential_inequality", 1e-8 - worst_ineq, dense);
        if (!lg) add("mu_prime_lower_bound", worst_lower, dense);
    }
    if (!lg) {
        add("condition_iv", 1e-10 - std::abs(mu.condition_iv_integral() - std::exp(2.0 * ip)), 1);
        double worst = 0.0;
        for (double t0 : {1.0, std::exp(2.0)}) {
            double a = t0 * (1.0 - 1e-9), b = t0 * (1.0 + 1e-9);
            worst = std::max(worst, std::abs(mu(a) - mu(b)));
            worst = std::max(worst, std::abs(mu.d1(a) - mu.d1(b)));
        }
        add("branch_c1_agreement", 1e-6 - worst, 2);
    }
    std::mt19937_64 rng(seed);
    {
        std::uniform_real_distribution<double> u(-4.0, 4.0);
        double worst = MuFunction::kInf;
        for (long k = 0; k < pairs; ++k) {
            double t1 = std::pow(10.0, u(rng)), t2 = std::pow(10.0, u(rng));
            auto r = slope_lower(mu, t1, t2);
            worst = std::min(worst, r.lhs - r.rhs);
        }
        add("slope_inequality", worst + 1e-10, pairs);
    }
    {
        std::uniform_real_distribution<double> ul(-1.5, 1.5), ux(-1.0, 1.0);
        double worst = -MuFunction::kInf;
        long count = 0;
        for (int n = 1; n <= 3; ++n) {
            if (!lg && mu.p() < n) continue;
            for (long k = 0; k < forms; ++k) {
                std::vector<double> lam(n), xi(n);
                for (int i = 0; i < n; ++i) {
                    lam[i] = std::pow(10.0, ul(rng));
                    xi[i] = ux(rng);
                }
                worst = std::max(worst, concavity_check(mu, n, lam, xi));
                ++count;
            }
        }
        add("concavity_form", 1e-8 - worst, count);
    }
    return cert;
}

}  // namespace cmalab
