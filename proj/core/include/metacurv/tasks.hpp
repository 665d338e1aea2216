#pragma once

#include <cstddef>
#include <vector>

#include "metacurv/rng.hpp"

namespace metacurv {

/// One sinusoid regression task y = A * sin(x - phi),
/// A in [0.1, 5.0], phi in [0, pi].
struct SineTask {
    double amplitude = 1.0;
    double phase = 0.0;

    double operator()(double x) const;
};

/// K-shot adaptation set plus a disjoint evaluation set for one task.
/// All inputs are drawn uniformly from [-5, 5].
struct Episode {
    std::vector<double> train_x, train_y;
    std::vector<double> eval_x, eval_y;
    SineTask task;
};

SineTask sample_task(SplitMix64& rng);

Episode sample_episode(const SineTask& task, std::size_t k_shot, std::size_t n_eval,
                       SplitMix64& rng);

}  // namespace metacurv
