#include "cmalab/isotonic.hpp"

#include <stdexcept>

namespace cmalab {

std::vector<double> isotonic_regression(const std::vector<double>& y, const std::vector<double>& w) {
    const std::size_t n = y.size();
    if (!w.empty() && w.size() != n) throw std::invalid_argument("isotonic_regression: weight size mismatch");
    struct Block {
        double mean, weight;
        std::size_t len;
    };
    std::vector<Block> stack;
    stack.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double wi = w.empty() ? 1.0 : w[i];
        if (!(wi > 0.0)) throw std::invalid_argument("isotonic_regression: weights must be positive");
        Block b{y[i], wi, 1};
        while (!stack.empty() && stack.back().mean > b.mean) {
            const Block& top = stack.back();
            double tw = top.weight + b.weight;
            b.mean = (top.mean * top.weight + b.mean * b.weight) / tw;
            b.weight = tw;
            b.len += top.len;
            stack.pop_back();
        }
        stack.push_back(b);
    }
    std::vector<double> out;
    out.reserve(n);
    for (const Block& b : stack) out.insert(out.end(), b.len, b.mean);
    return out;
}

}  // namespace cmalab
