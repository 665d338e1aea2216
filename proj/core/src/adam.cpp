#include "metacurv/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace metacurv {

void adam_step(AdamState& state, std::vector<double>& params, std::span<const double> grads,
               double lr) {
    const std::size_t n = params.size();
    if (state.m.size() != n || state.v.size() != n || grads.size() != n) {
        throw std::invalid_argument("adam_step: state/parameter/gradient sizes differ");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

}  // namespace metacurv
