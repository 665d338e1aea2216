#include "metacurv/tasks.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace metacurv {

double SineTask::operator()(double x) const { return amplitude * std::sin(x - phase); }

SineTask sample_task(SplitMix64& rng) {
    SineTask t;
    t.amplitude = rng.uniform(0.1, 5.0);
    t.phase = rng.uniform(0.0, std::numbers::pi);
    return t;
}

Episode sample_episode(const SineTask& task, std::size_t k_shot, std::size_t n_eval,
                       SplitMix64& rng) {
    if (k_shot == 0 || n_eval == 0) {
        throw std::invalid_argument("sample_episode: k_shot and n_eval must be >= 1");
    }
    Episode ep;
    ep.task = task;
    ep.train_x.resize(k_shot);
    ep.train_y.resize(k_shot);
    ep.eval_x.resize(n_eval);
    ep.eval_y.resize(n_eval);
    for (std::size_t i = 0; i < k_shot; ++i) {
        ep.train_x[i] = rng.uniform(-5.0, 5.0);
        ep.train_y[i] = task(ep.train_x[i]);
    }
    for (std::size_t i = 0; i < n_eval; ++i) {
        ep.eval_x[i] = rng.uniform(-5.0, 5.0);
        ep.eval_y[i] = task(ep.eval_x[i]);
    }
    return ep;
}

}  // namespace metacurv
