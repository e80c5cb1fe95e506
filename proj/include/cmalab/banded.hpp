#pragma once

#include <vector>

namespace cmalab {

/// Square band matrix in LAPACK general-band layout, with the extra kl rows dgbsv needs for fill-in.
class BandMatrix {
public:
    BandMatrix(int n, int kl, int ku);

    int size() const { return n_; }
    int kl() const { return kl_; }
    int ku() const { return ku_; }

    /// Entry (i, j); |i - j| must lie inside the band.
    double& operator()(int i, int j);
    double operator()(int i, int j) const;
    bool in_band(int i, int j) const { return j - i <= ku_ && i - j <= kl_; }

    void set_zero();
    std::vector<double> multiply(const std::vector<double>& x) const;

    /// Solve A x = rhs in place (LU with partial pivoting). Returns LAPACK info; 0 on success.
    /// The matrix is overwritten with its factors.
    int solve_in_place(std::vector<double>& rhs);

private:
    int n_, kl_, ku_, ldab_;
    std::vector<double> ab_;  // column-major, ldab_ x n_
};

}  // namespace cmalab
