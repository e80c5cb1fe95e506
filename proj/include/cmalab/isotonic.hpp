#pragma once

#include <vector>

namespace cmalab {

/// Weighted least-squares nondecreasing fit (pool-adjacent-violators).
/// Weights must be positive; an empty weight vector means unit weights.
std::vector<double> isotonic_regression(const std::vector<double>& y, const std::vector<double>& w = {});

}  // namespace cmalab
