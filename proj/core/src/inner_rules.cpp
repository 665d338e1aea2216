#include "metacurv/inner_rules.hpp"

#include <stdexcept>
#include <string>

namespace metacurv {

namespace {

void check_stack_shapes(const ParamStack& a, const ParamStack& b, const char* what) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": layer counts differ");
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (a[l].weight.shape() != b[l].weight.shape() || a[l].bias.shape() != b[l].bias.shape()) {
            throw std::invalid_argument(std::string(what) + ": tensor shapes differ at layer " +
                                        std::to_string(l));
        }
    }
}

DenseTensor scaled(const DenseTensor& t, double a) {
    DenseTensor out = t;
    for (double& x : out.data()) x *= a;
    return out;
}

}  // namespace

ParamStack inner_update_at(const ParamStack& params, const ParamStack& grads,
                           const InnerRule& rule, std::size_t step) {
    check_stack_shapes(params, grads, "inner_update");
    ParamStack out = params;

    if (const auto* fixed = std::get_if<FixedLR>(&rule)) {
        stack_axpy(-fixed->alpha, grads, out);
        return out;
    }
    if (const auto* perco = std::get_if<PerCoordinate>(&rule)) {
        check_stack_shapes(params, perco->alpha, "inner_update(PerCoordinate)");
        for (std::size_t l = 0; l < out.size(); ++l) {
            for (std::size_t i = 0; i < out[l].weight.size(); ++i)
                out[l].weight[i] -= perco->alpha[l].weight[i] * grads[l].weight[i];
            for (std::size_t i = 0; i < out[l].bias.size(); ++i)
                out[l].bias[i] -= perco->alpha[l].bias[i] * grads[l].bias[i];
        }
        return out;
    }
    if (const auto* perlayer = std::get_if<PerLayer>(&rule)) {
        if (perlayer->alpha.size() != params.size()) {
            throw std::invalid_argument("inner_update(PerLayer): rate count != layer count");
        }
        for (std::size_t l = 0; l < out.size(); ++l) {
            const double a = perlayer->alpha[l];
            for (std::size_t i = 0; i < out[l].weight.size(); ++i)
                out[l].weight[i] -= a * grads[l].weight[i];
            for (std::size_t i = 0; i < out[l].bias.size(); ++i)
                out[l].bias[i] -= a * grads[l].bias[i];
        }
        return out;
    }

    const auto& mc = std::get<MetaCurv>(rule);
    const BlockStack& blocks = mc.blocks_for_step(step);
    if (blocks.size() != params.size()) {
        throw std::invalid_argument("inner_update(MetaCurv): block count != layer count");
    }
    for (std::size_t l = 0; l < out.size(); ++l) {
        const DenseTensor tw = mc_transform(grads[l].weight, blocks[l].weight);
        const DenseTensor tb = mc_transform(grads[l].bias, blocks[l].bias);
        for (std::size_t i = 0; i < out[l].weight.size(); ++i)
            out[l].weight[i] -= mc.alpha * tw[i];
        for (std::size_t i = 0; i < out[l].bias.size(); ++i) out[l].bias[i] -= mc.alpha * tb[i];
    }
    return out;
}

ParamStack inner_update(const ParamStack& params, const ParamStack& grads, const InnerRule& rule) {
    return inner_update_at(params, grads, rule, 0);
}

ParamStack preconditioner_transpose_apply(const InnerRule& rule, const ParamStack& u) {
    ParamStack out = u;
    if (const auto* fixed = std::get_if<FixedLR>(&rule)) {
        stack_scale(fixed->alpha, out);
        return out;
    }
    if (const auto* perco = std::get_if<PerCoordinate>(&rule)) {
        check_stack_shapes(u, perco->alpha, "preconditioner_transpose_apply");
        for (std::size_t l = 0; l < out.size(); ++l) {
            for (std::size_t i = 0; i < out[l].weight.size(); ++i)
                out[l].weight[i] *= perco->alpha[l].weight[i];
            for (std::size_t i = 0; i < out[l].bias.size(); ++i)
                out[l].bias[i] *= perco->alpha[l].bias[i];
        }
        return out;
    }
    if (const auto* perlayer = std::get_if<PerLayer>(&rule)) {
        if (perlayer->alpha.size() != u.size()) {
            throw std::invalid_argument("preconditioner_transpose_apply: rate count mismatch");
        }
        for (std::size_t l = 0; l < out.size(); ++l) {
            for (double& x : out[l].weight.data()) x *= perlayer->alpha[l];
            for (double& x : out[l].bias.data()) x *= perlayer->alpha[l];
        }
        return out;
    }
    const auto& mc = std::get<MetaCurv>(rule);
    const BlockStack& blocks = mc.blocks_for_step(0);
    for (std::size_t l = 0; l < out.size(); ++l) {
        out[l].weight = scaled(mc_adjoint(u[l].weight, blocks[l].weight), mc.alpha);
        out[l].bias = scaled(mc_adjoint(u[l].bias, blocks[l].bias), mc.alpha);
    }
    return out;
}

RuleGrads zero_rule_grads(const InnerRule& rule) {
    if (std::holds_alternative<FixedLR>(rule)) return RuleGrads{0.0};
    if (const auto* perco = std::get_if<PerCoordinate>(&rule)) {
        return RuleGrads{zeros_like(perco->alpha)};
    }
    if (const auto* perlayer = std::get_if<PerLayer>(&rule)) {
        return RuleGrads{std::vector<double>(perlayer->alpha.size(), 0.0)};
    }
    const auto& mc = std::get<MetaCurv>(rule);
    McRuleGrads g;
    g.steps.resize(mc.steps.size());
    for (std::size_t s = 0; s < mc.steps.size(); ++s) {
        g.steps[s].reserve(mc.steps[s].size());
        for (const auto& bp : mc.steps[s]) {
            BlockGradPair bg;
            bg.weight = McParamGrads{DenseMatrix(bp.weight.mo.rows(), bp.weight.mo.cols()),
                                     DenseMatrix(bp.weight.mi.rows(), bp.weight.mi.cols()),
                                     DenseMatrix(bp.weight.mf.rows(), bp.weight.mf.cols())};
            bg.bias = McParamGrads{DenseMatrix(bp.bias.mo.rows(), bp.bias.mo.cols()),
                                   DenseMatrix(bp.bias.mi.rows(), bp.bias.mi.cols()),
                                   DenseMatrix(bp.bias.mf.rows(), bp.bias.mf.cols())};
            g.steps[s].push_back(std::move(bg));
        }
    }
    return RuleGrads{std::move(g)};
}

namespace {

void add_matrix(DenseMatrix& acc, const DenseMatrix& m) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += m.data()[i];
}

void add_param_grads(McParamGrads& acc, const McParamGrads& g) {
    add_matrix(acc.mo, g.mo);
    add_matrix(acc.mi, g.mi);
    add_matrix(acc.mf, g.mf);
}

}  // namespace

void accumulate_rule_grads(RuleGrads& acc, const RuleGrads& g) {
    if (auto* d = std::get_if<double>(&acc)) {
        *d += std::get<double>(g);
        return;
    }
    if (auto* stack = std::get_if<ParamStack>(&acc)) {
        stack_axpy(1.0, std::get<ParamStack>(g), *stack);
        return;
    }
    if (auto* vec = std::get_if<std::vector<double>>(&acc)) {
        const auto& other = std::get<std::vector<double>>(g);
        for (std::size_t i = 0; i < vec->size(); ++i) (*vec)[i] += other[i];
        return;
    }
    auto& mc = std::get<McRuleGrads>(acc);
    const auto& other = std::get<McRuleGrads>(g);
    for (std::size_t s = 0; s < mc.steps.size(); ++s) {
        for (std::size_t l = 0; l < mc.steps[s].size(); ++l) {
            add_param_grads(mc.steps[s][l].weight, other.steps[s][l].weight);
            add_param_grads(mc.steps[s][l].bias, other.steps[s][l].bias);
        }
    }
}

namespace {

/// Rule gradients contributed by one inner step: g taken at that step's
/// parameters, u the sensitivity at the final adapted parameters.
void add_step_rule_grads(RuleGrads& acc, const InnerRule& rule, const ParamStack& step_grad,
                         const ParamStack& u, std::size_t step) {
    if (std::holds_alternative<FixedLR>(rule)) {
        std::get<double>(acc) += -stack_dot(u, step_grad);
        return;
    }
    if (std::holds_alternative<PerCoordinate>(rule)) {
        auto& stack = std::get<ParamStack>(acc);
        for (std::size_t l = 0; l < stack.size(); ++l) {
            for (std::size_t i = 0; i < stack[l].weight.size(); ++i)
                stack[l].weight[i] -= u[l].weight[i] * step_grad[l].weight[i];
            for (std::size_t i = 0; i < stack[l].bias.size(); ++i)
                stack[l].bias[i] -= u[l].bias[i] * step_grad[l].bias[i];
        }
        return;
    }
    if (std::holds_alternative<PerLayer>(rule)) {
        auto& vec = std::get<std::vector<double>>(acc);
        for (std::size_t l = 0; l < vec.size(); ++l) {
            double s = 0.0;
            for (std::size_t i = 0; i < u[l].weight.size(); ++i)
                s += u[l].weight[i] * step_grad[l].weight[i];
            for (std::size_t i = 0; i < u[l].bias.size(); ++i)
                s += u[l].bias[i] * step_grad[l].bias[i];
            vec[l] -= s;
        }
        return;
    }
    const auto& mc = std::get<MetaCurv>(rule);
    auto& mcg = std::get<McRuleGrads>(acc);
    const std::size_t slot = (step < mc.steps.size()) ? step : mc.steps.size() - 1;
    const BlockStack& blocks = mc.blocks_for_step(step);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const McParamGrads gw = mc_param_grads(step_grad[l].weight,
                                               scaled(u[l].weight, -mc.alpha), blocks[l].weight);
        const McParamGrads gb =
            mc_param_grads(step_grad[l].bias, scaled(u[l].bias, -mc.alpha), blocks[l].bias);
        add_param_grads(mcg.steps[slot][l].weight, gw);
        add_param_grads(mcg.steps[slot][l].bias, gb);
    }
}

}  // namespace

TaskResult task_meta_grads(const MLP& net, const Episode& episode, const InnerRule& rule,
                           MetaGradMode mode, std::size_t inner_steps) {
    if (inner_steps == 0) throw std::invalid_argument("task_meta_grads: inner_steps must be >= 1");
    if (mode == MetaGradMode::Exact && inner_steps != 1) {
        throw std::invalid_argument("exact meta-gradients require a single inner step");
    }

    MLP adapted = net;
    std::vector<ParamStack> step_grads;
    step_grads.reserve(inner_steps);
    for (std::size_t s = 0; s < inner_steps; ++s) {
        step_grads.push_back(loss_grad(adapted, episode.train_x, episode.train_y));
        adapted.layers = inner_update_at(adapted.layers, step_grads.back(), rule, s);
    }

    const ParamStack u = loss_grad(adapted, episode.eval_x, episode.eval_y);

    TaskResult result;
    result.adapted_eval_loss = mse_loss(adapted, episode.eval_x, episode.eval_y);

    if (mode == MetaGradMode::FirstOrder) {
        result.theta_grad = u;
    } else {
        const ParamStack ptu = preconditioner_transpose_apply(rule, u);
        const std::vector<double> hv =
            hvp(net, episode.train_x, episode.train_y, to_param_vector(ptu));
        result.theta_grad = u;
        stack_axpy(-1.0, from_param_vector(net.widths(), hv), result.theta_grad);
    }

    result.rule_grads = zero_rule_grads(rule);
    for (std::size_t s = 0; s < inner_steps; ++s) {
        add_step_rule_grads(result.rule_grads, rule, step_grads[s], u, s);
    }
    return result;
}

ParamStack meta_grad_theta(const MLP& net, const Episode& episode, const InnerRule& rule,
                           MetaGradMode mode, std::size_t inner_steps) {
    return task_meta_grads(net, episode, rule, mode, inner_steps).theta_grad;
}

RuleGrads meta_grad_rule(const MLP& net, const Episode& episode, const InnerRule& rule,
                         std::size_t inner_steps) {
    return task_meta_grads(net, episode, rule, MetaGradMode::FirstOrder, inner_steps).rule_grads;
}

}  // namespace metacurv
