#pragma once

#include <string>
#include <vector>

#include "cmalab/config.hpp"

namespace cmalab {

struct VerifyReport {
    struct Item {
        std::string property;
        std::string module;
        bool pass = false;
        double slack = 0.0;   // observed margin; >= 0 passes
    };
    std::vector<Item> items;
    std::uint64_t seed = 0;
    bool all_pass() const;
    std::string to_json() const;
};

/// Runs every property check at the config's grid size and seed. Randomized checks draw from
/// std::mt19937_64 seeded with cfg.seed. A positive cfg.mu_fault tampers with the certified mu.
VerifyReport verify_suite(const RunConfig& cfg);

/// First zero of J0 by bisection on its power series.
double bessel_j0_first_zero();

}  // namespace cmalab
