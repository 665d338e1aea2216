#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "metacurv/tensor.hpp"

namespace metacurv {

/// One fully connected layer's parameters. The weight is kept as an order-3
/// tensor (Cout, Cin, 1) and the bias as (Cout, 1, 1) so that the curvature
/// transform applies uniformly.
struct LayerPair {
    DenseTensor weight;
    DenseTensor bias;
};

/// Parameters (or same-shaped gradients) for a whole network.
using ParamStack = std::vector<LayerPair>;

/// Multilayer perceptron, scalar in / scalar out, ReLU after every hidden
/// layer, linear output. The benchmark model is 1-40-40-1 (1761 parameters);
/// other widths are allowed for tests and diagnostics.
class MLP {
public:
    MLP() = default;
    explicit MLP(const std::vector<std::size_t>& widths);  // zero parameters

    ParamStack layers;

    std::vector<std::size_t> widths() const;
    std::size_t param_count() const;
};

inline const std::vector<std::size_t> kDefaultWidths{1, 40, 40, 1};

double forward(const MLP& net, double x);

double mse_loss(const MLP& net, std::span<const double> xs, std::span<const double> ys);

/// Exact reverse-mode gradient of mse_loss with respect to every weight and
/// bias. ReLU subgradient at exactly 0 is taken as 0.
ParamStack loss_grad(const MLP& net, std::span<const double> xs, std::span<const double> ys);

/// Flat parameter order: layer-major, weight before bias, each tensor in
/// storage (vectorize) order. This layout is stable; checkpoints depend on it.
std::vector<double> to_param_vector(const ParamStack& params);
ParamStack from_param_vector(const std::vector<std::size_t>& widths,
                             std::span<const double> flat);

/// Hessian-vector product by central differences of the exact gradient,
/// (grad(theta + h*u) - grad(theta - h*u)) / (2h) rescaled so that u = v
/// normalized by its max-norm; O(h^2) truncation error. Throws
/// std::runtime_error if the result is not finite.
std::vector<double> hvp(const MLP& net, std::span<const double> xs, std::span<const double> ys,
                        std::span<const double> v, double h = 1e-4);

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases;
/// deterministic in the seed.
MLP init_weights(std::uint64_t seed);
MLP init_weights(const std::vector<std::size_t>& widths, std::uint64_t seed);

// ParamStack arithmetic used by the update rules and the trainer.
ParamStack zeros_like(const ParamStack& p);
void stack_axpy(double a, const ParamStack& x, ParamStack& y);  // y += a*x
void stack_scale(double a, ParamStack& x);
double stack_dot(const ParamStack& a, const ParamStack& b);
bool stack_all_finite(const ParamStack& p);

}  // namespace metacurv
