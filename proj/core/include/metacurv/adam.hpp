#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace metacurv {

/// ADAM moments for one parameter group.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected ADAM step, in place. Throws std::runtime_error on
/// non-finite gradients.
void adam_step(AdamState& state, std::vector<double>& params, std::span<const double> grads,
               double lr);

}  // namespace metacurv
