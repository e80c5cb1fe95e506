#include "cmalab/banded.hpp"

#include <lapacke.h>

#include <algorithm>
#include <stdexcept>

namespace cmalab {

BandMatrix::BandMatrix(int n, int kl, int ku)
    : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1), ab_(static_cast<std::size_t>(ldab_) * n, 0.0) {
    if (n < 1 || kl < 0 || ku < 0) throw std::invalid_argument("BandMatrix: bad shape");
}

double& BandMatrix::operator()(int i, int j) {
    if (!in_band(i, j)) throw std::out_of_range("BandMatrix: entry outside band");
    return ab_[static_cast<std::size_t>(j) * ldab_ + (kl_ + ku_ + i - j)];
}

double BandMatrix::operator()(int i, int j) const {
    if (!in_band(i, j)) return 0.0;
    return ab_[static_cast<std::size_t>(j) * ldab_ + (kl_ + ku_ + i - j)];
}

void BandMatrix::set_zero() { std::fill(ab_.begin(), ab_.end(), 0.0); }

std::vector<double> BandMatrix::multiply(const std::vector<double>& x) const {
    std::vector<double> y(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
        int lo = std::max(0, i - kl_), hi = std::min(n_ - 1, i + ku_);
        double acc = 0.0;
        for (int j = lo; j <= hi; ++j) acc += (*this)(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

int BandMatrix::solve_in_place(std::vector<double>& rhs) {
    if (static_cast<int>(rhs.size()) != n_) throw std::invalid_argument("BandMatrix: rhs size mismatch");
    std::vector<lapack_int> ipiv(n_);
    return LAPACKE_dgbsv(LAPACK_COL_MAJOR, n_, kl_, ku_, 1, ab_.data(), ldab_, ipiv.data(), rhs.data(), n_);
}

}  // namespace cmalab
