#pragma once

#include <vector>

#include "cmalab/banded.hpp"
#include "cmalab/radial_domain.hpp"

namespace cmalab {

/// Discrete radial Monge-Ampere density at every node, no clamping.
/// Nodes 0..N-2 follow the grid's flux/pointwise scheme; node N-1 uses one-sided
/// (v')^{n-1}(v' + v'').
std::vector<double> ma_raw(const RadialFn& v);

/// W_i = n sum_{k<=i} q_k m_k for i = 0..N-2.
std::vector<double> cumulative_mass(const RadialGrid& g, const std::vector<double>& m);

/// d MA_i / d v_k for i, k in 0..N-2 (the boundary value is held fixed). Band (2, 2).
BandMatrix ma_jacobian(const RadialFn& v);

/// Exact inverse of ma_raw on nodes 0..N-2: returns v with v(1) = 0 and ma_raw(v)_i = m_i.
/// m must be nonnegative and have at least N-1 entries.
RadialFn invert_density(const GridPtr& g, const std::vector<double>& m);

/// Independent discretization of v'(s) = (n int_0^s g sigma^{n-1})^{1/n} / s, v(1) = 0:
/// exact piecewise-linear moments, trapezoid reintegration.
RadialFn flux_formula_inverse(const GridPtr& g, const std::vector<double>& gvals);

}  // namespace cmalab
