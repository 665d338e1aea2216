#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "metacurv/curvature.hpp"
#include "metacurv/mlp.hpp"
#include "metacurv/tasks.hpp"

namespace metacurv {

/// theta' = theta - alpha * g
struct FixedLR {
    double alpha = 0.01;
};

/// theta' = theta - alpha o g, one learnable rate per parameter (Meta-SGD).
struct PerCoordinate {
    ParamStack alpha;
};

/// theta'_l = theta_l - alpha_l * g_l, one learnable rate per layer
/// (covering that layer's weight and bias).
struct PerLayer {
    std::vector<double> alpha;
};

/// Curvature blocks for one layer's weight and bias tensors.
struct BlockPair {
    CurvatureBlock weight;
    CurvatureBlock bias;
};
using BlockStack = std::vector<BlockPair>;  // one entry per layer

/// theta'_l = theta_l - alpha * mc_transform(g_l, block_l). alpha stays
/// fixed; only the curvature matrices are learnable. `steps` holds one
/// block stack when blocks are shared across inner steps (the default) or
/// one stack per inner step.
struct MetaCurv {
    std::vector<BlockStack> steps;
    double alpha = 0.01;
    McVariant variant = McVariant::MC2;

    const BlockStack& blocks_for_step(std::size_t step) const {
        return steps[step < steps.size() ? step : steps.size() - 1];
    }
};

using InnerRule = std::variant<FixedLR, PerCoordinate, PerLayer, MetaCurv>;

/// Exact meta-gradients differentiate through the inner update (valid for a
/// single inner step); FirstOrder drops the Hessian term.
enum class MetaGradMode { Exact, FirstOrder };

/// One inner gradient step on the parameters. Uses the step-0 blocks for
/// MetaCurv rules; multi-step trajectories are handled by the trainer.
ParamStack inner_update(const ParamStack& params, const ParamStack& grads, const InnerRule& rule);
ParamStack inner_update_at(const ParamStack& params, const ParamStack& grads,
                           const InnerRule& rule, std::size_t step);

/// Gradient of the post-adaptation evaluation loss with respect to the
/// initial parameters. With u = grad L_eval(theta'), FirstOrder returns u;
/// Exact returns u - H_train(theta) * (P^T u), P being the rule's linear
/// preconditioner including its learning-rate factor.
ParamStack meta_grad_theta(const MLP& net, const Episode& episode, const InnerRule& rule,
                           MetaGradMode mode, std::size_t inner_steps = 1);

struct BlockGradPair {
    McParamGrads weight;
    McParamGrads bias;
};

struct McRuleGrads {
    std::vector<std::vector<BlockGradPair>> steps;  // mirrors MetaCurv::steps
};

/// Gradients of the post-adaptation evaluation loss with respect to the
/// rule's learnable parameters (exact for one inner step, where theta' is
/// linear in them; first-order linearization per step otherwise).
using RuleGrads = std::variant<double, ParamStack, std::vector<double>, McRuleGrads>;

RuleGrads meta_grad_rule(const MLP& net, const Episode& episode, const InnerRule& rule,
                         std::size_t inner_steps = 1);

/// Everything the outer loop needs from one task, computed off a single
/// inner trajectory.
struct TaskResult {
    ParamStack theta_grad;
    RuleGrads rule_grads;
    double adapted_eval_loss = 0.0;
};

TaskResult task_meta_grads(const MLP& net, const Episode& episode, const InnerRule& rule,
                           MetaGradMode mode, std::size_t inner_steps = 1);

/// P^T u for the rule's preconditioner (used by the exact meta-gradient).
ParamStack preconditioner_transpose_apply(const InnerRule& rule, const ParamStack& u);

RuleGrads zero_rule_grads(const InnerRule& rule);
void accumulate_rule_grads(RuleGrads& acc, const RuleGrads& g);

}  // namespace metacurv
