#include "metacurv/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace metacurv {

std::string method_name(Method m) {
    switch (m) {
        case Method::MAML: return "MAML";
        case Method::MetaSGD: return "MetaSGD";
        case Method::LayerLR: return "LayerLR";
        case Method::MC1: return "MC1";
        case Method::MC2: return "MC2";
    }
    throw std::invalid_argument("method_name: bad enum value");
}

Method method_from_name(const std::string& name) {
    if (name == "MAML") return Method::MAML;
    if (name == "MetaSGD") return Method::MetaSGD;
    if (name == "LayerLR") return Method::LayerLR;
    if (name == "MC1") return Method::MC1;
    if (name == "MC2") return Method::MC2;
    throw std::invalid_argument("unknown method '" + name +
                                "' (expected MAML|MetaSGD|LayerLR|MC1|MC2)");
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.k_shot == 0) throw std::invalid_argument("config: k_shot must be >= 1");
    if (cfg.meta_batch == 0) throw std::invalid_argument("config: meta_batch must be >= 1");
    if (cfg.iterations == 0) throw std::invalid_argument("config: iterations must be >= 1");
    if (cfg.inner_steps == 0) throw std::invalid_argument("config: inner_steps must be >= 1");
    if (cfg.eval_every == 0) throw std::invalid_argument("config: eval_every must be >= 1");
    if (cfg.eval_tasks < 2) throw std::invalid_argument("config: eval_tasks must be >= 2");
    if (cfg.meta_grad_mode == MetaGradMode::Exact && cfg.inner_steps != 1) {
        throw std::invalid_argument(
            "config: exact meta-gradients require inner_steps == 1 (use first_order)");
    }
    if (cfg.per_step_curvature && cfg.method != Method::MC1 && cfg.method != Method::MC2) {
        throw std::invalid_argument("config: per_step_curvature needs an MC method");
    }
}

InnerRule make_rule(const TrainConfig& cfg) {
    const MLP net(kDefaultWidths);
    switch (cfg.method) {
        case Method::MAML: return FixedLR{cfg.inner_lr};
        case Method::MetaSGD: {
            PerCoordinate rule{zeros_like(net.layers)};
            for (auto& l : rule.alpha) {
                for (double& x : l.weight.data()) x = cfg.inner_lr;
                for (double& x : l.bias.data()) x = cfg.inner_lr;
            }
            return rule;
        }
        case Method::LayerLR:
            return PerLayer{std::vector<double>(net.layers.size(), cfg.inner_lr)};
        case Method::MC1:
        case Method::MC2: {
            const McVariant variant =
                cfg.method == Method::MC1 ? McVariant::MC1 : McVariant::MC2;
            BlockStack stack;
            stack.reserve(net.layers.size());
            for (const auto& l : net.layers) {
                const LayerShape ws{l.weight.extent(1), l.weight.extent(2), l.weight.extent(3)};
                const LayerShape bs{l.bias.extent(1), l.bias.extent(2), l.bias.extent(3)};
                stack.push_back(BlockPair{mc_init(ws, variant), mc_init(bs, variant)});
            }
            MetaCurv rule;
            rule.alpha = cfg.inner_lr;
            rule.variant = variant;
            const std::size_t copies = cfg.per_step_curvature ? cfg.inner_steps : 1;
            rule.steps.assign(copies, stack);
            return rule;
        }
    }
    throw std::invalid_argument("make_rule: bad method");
}

std::vector<std::string> rule_group_names(const InnerRule& rule) {
    if (std::holds_alternative<FixedLR>(rule)) return {};
    if (std::holds_alternative<MetaCurv>(rule)) return {"Mo", "Mi", "Mf"};
    return {"alpha"};
}

namespace {

template <typename PickMatrix>
std::vector<double> pack_mc_factor(const MetaCurv& mc, PickMatrix pick) {
    std::vector<double> out;
    for (const auto& stack : mc.steps) {
        for (const auto& bp : stack) {
            const auto& w = pick(bp.weight);
            out.insert(out.end(), w.data().begin(), w.data().end());
            const auto& b = pick(bp.bias);
            out.insert(out.end(), b.data().begin(), b.data().end());
        }
    }
    return out;
}

template <typename PickMatrix>
void unpack_mc_factor(MetaCurv& mc, const std::vector<double>& flat, PickMatrix pick) {
    std::size_t pos = 0;
    for (auto& stack : mc.steps) {
        for (auto& bp : stack) {
            for (double& x : pick(bp.weight).data()) x = flat.at(pos++);
            for (double& x : pick(bp.bias).data()) x = flat.at(pos++);
        }
    }
    if (pos != flat.size()) throw std::invalid_argument("rule_groups_unpack: length mismatch");
}

template <typename PickGrads>
std::vector<double> pack_mc_grads(const McRuleGrads& g, PickGrads pick) {
    std::vector<double> out;
    for (const auto& stack : g.steps) {
        for (const auto& bp : stack) {
            const auto& w = pick(bp.weight);
            out.insert(out.end(), w.data().begin(), w.data().end());
            const auto& b = pick(bp.bias);
            out.insert(out.end(), b.data().begin(), b.data().end());
        }
    }
    return out;
}

}  // namespace

std::vector<std::vector<double>> rule_groups_pack(const InnerRule& rule) {
    if (std::holds_alternative<FixedLR>(rule)) return {};
    if (const auto* perco = std::get_if<PerCoordinate>(&rule)) {
        return {to_param_vector(perco->alpha)};
    }
    if (const auto* perlayer = std::get_if<PerLayer>(&rule)) {
        return {perlayer->alpha};
    }
    const auto& mc = std::get<MetaCurv>(rule);
    return {pack_mc_factor(mc, [](const CurvatureBlock& b) -> const DenseMatrix& { return b.mo; }),
            pack_mc_factor(mc, [](const CurvatureBlock& b) -> const DenseMatrix& { return b.mi; }),
            pack_mc_factor(mc, [](const CurvatureBlock& b) -> const DenseMatrix& { return b.mf; })};
}

void rule_groups_unpack(InnerRule& rule, const std::vector<std::vector<double>>& groups) {
    if (std::holds_alternative<FixedLR>(rule)) {
        if (!groups.empty()) throw std::invalid_argument("rule_groups_unpack: fixed rule has no groups");
        return;
    }
    if (auto* perco = std::get_if<PerCoordinate>(&rule)) {
        if (groups.size() != 1) throw std::invalid_argument("rule_groups_unpack: expected 1 group");
        MLP shape;
        shape.layers = perco->alpha;
        perco->alpha = from_param_vector(shape.widths(), groups[0]);
        return;
    }
    if (auto* perlayer = std::get_if<PerLayer>(&rule)) {
        if (groups.size() != 1 || groups[0].size() != perlayer->alpha.size()) {
            throw std::invalid_argument("rule_groups_unpack: per-layer group size mismatch");
        }
        perlayer->alpha = groups[0];
        return;
    }
    auto& mc = std::get<MetaCurv>(rule);
    if (groups.size() != 3) throw std::invalid_argument("rule_groups_unpack: expected Mo/Mi/Mf");
    unpack_mc_factor(mc, groups[0], [](CurvatureBlock& b) -> DenseMatrix& { return b.mo; });
    unpack_mc_factor(mc, groups[1], [](CurvatureBlock& b) -> DenseMatrix& { return b.mi; });
    unpack_mc_factor(mc, groups[2], [](CurvatureBlock& b) -> DenseMatrix& { return b.mf; });
}

std::vector<std::vector<double>> rule_grads_pack(const InnerRule& rule, const RuleGrads& grads) {
    if (std::holds_alternative<FixedLR>(rule)) return {};
    if (std::holds_alternative<PerCoordinate>(rule)) {
        return {to_param_vector(std::get<ParamStack>(grads))};
    }
    if (std::holds_alternative<PerLayer>(rule)) {
        return {std::get<std::vector<double>>(grads)};
    }
    const auto& g = std::get<McRuleGrads>(grads);
    return {pack_mc_grads(g, [](const McParamGrads& b) -> const DenseMatrix& { return b.mo; }),
            pack_mc_grads(g, [](const McParamGrads& b) -> const DenseMatrix& { return b.mi; }),
            pack_mc_grads(g, [](const McParamGrads& b) -> const DenseMatrix& { return b.mf; })};
}

namespace {

std::size_t resolve_threads(std::size_t requested, std::size_t njobs) {
    std::size_t t = requested;
    if (t == 0) {
        if (const char* env = std::getenv("METACURV_THREADS")) {
            t = static_cast<std::size_t>(std::strtoull(env, nullptr, 10));
        }
        if (t == 0) t = std::thread::hardware_concurrency();
        if (t == 0) t = 1;
    }
    if (njobs == 0) njobs = 1;
    return std::min(t, njobs);
}

/// Runs fn(0..n-1) on `threads` workers in contiguous chunks. Results must
/// be written to per-index slots; reductions happen on the caller in index
/// order, so the outcome is independent of the thread count.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    threads = std::min(threads == 0 ? std::size_t{1} : threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run_chunk = [&](std::size_t begin, std::size_t end) {
        try {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };
    std::vector<std::thread> workers;
    workers.reserve(threads - 1);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t w = 1; w < threads; ++w) {
        const std::size_t begin = w * chunk;
        if (begin >= n) break;
        workers.emplace_back(run_chunk, begin, std::min(begin + chunk, n));
    }
    run_chunk(0, std::min(chunk, n));
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t count_negative_rates(const InnerRule& rule) {
    std::uint64_t n = 0;
    if (const auto* perco = std::get_if<PerCoordinate>(&rule)) {
        for (const auto& l : perco->alpha) {
            for (double x : l.weight.data()) n += (x < 0.0);
            for (double x : l.bias.data()) n += (x < 0.0);
        }
    } else if (const auto* perlayer = std::get_if<PerLayer>(&rule)) {
        for (double x : perlayer->alpha) n += (x < 0.0);
    }
    return n;
}

std::vector<Episode> validation_episodes(const TrainConfig& cfg) {
    std::vector<Episode> eps;
    eps.reserve(cfg.eval_tasks);
    for (std::size_t i = 0; i < cfg.eval_tasks; ++i) {
        SplitMix64 rng = substream(cfg.seed, kStreamValidation, i);
        const SineTask task = sample_task(rng);
        eps.push_back(sample_episode(task, cfg.k_shot, kEvalPointsPerTask, rng));
    }
    return eps;
}

MLP adapt(const MLP& net, const Episode& ep, const InnerRule& rule, std::size_t inner_steps) {
    MLP adapted = net;
    for (std::size_t s = 0; s < inner_steps; ++s) {
        const ParamStack g = loss_grad(adapted, ep.train_x, ep.train_y);
        adapted.layers = inner_update_at(adapted.layers, g, rule, s);
    }
    return adapted;
}

}  // namespace

EvalResult evaluate_episodes(const MLP& net, const InnerRule& rule,
                             const std::vector<Episode>& episodes, std::size_t inner_steps,
                             std::size_t threads) {
    if (episodes.size() < 2) throw std::invalid_argument("evaluate: need at least 2 tasks");
    std::vector<double> losses(episodes.size(), 0.0);
    parallel_for(episodes.size(), resolve_threads(threads, episodes.size()), [&](std::size_t i) {
        const MLP adapted = adapt(net, episodes[i], rule, inner_steps);
        losses[i] = mse_loss(adapted, episodes[i].eval_x, episodes[i].eval_y);
    });
    const double n = static_cast<double>(losses.size());
    double mean = 0.0;
    for (double x : losses) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : losses) var += (x - mean) * (x - mean);
    var /= (n - 1.0);
    EvalResult out;
    out.mean_mse = mean;
    out.ci95 = 1.96 * std::sqrt(var / n);
    out.n_tasks = losses.size();
    return out;
}

EvalResult evaluate(const Checkpoint& ckpt, std::size_t n_tasks, std::size_t k_shot,
                    std::size_t inner_steps, std::uint64_t eval_seed, std::size_t threads) {
    if (n_tasks < 2) throw std::invalid_argument("evaluate: need at least 2 tasks");
    if (k_shot == 0) throw std::invalid_argument("evaluate: k_shot must be >= 1");
    if (inner_steps == 0) throw std::invalid_argument("evaluate: inner_steps must be >= 1");
    std::vector<Episode> eps;
    eps.reserve(n_tasks);
    for (std::size_t i = 0; i < n_tasks; ++i) {
        SplitMix64 rng = substream(eval_seed, kStreamEval, i);
        const SineTask task = sample_task(rng);
        eps.push_back(sample_episode(task, k_shot, kEvalPointsPerTask, rng));
    }
    MLP net;
    net.layers = from_param_vector(kDefaultWidths, ckpt.theta0);
    return evaluate_episodes(net, ckpt.rule, eps, inner_steps, threads);
}

TrainResult meta_train(const TrainConfig& cfg, const MetricsFn& on_metrics,
                       const Checkpoint* resume, std::size_t threads) {
    validate_config(cfg);
    const std::size_t nthreads = resolve_threads(threads, cfg.meta_batch);

    Checkpoint st;
    if (resume) {
        st = *resume;
        if (st.iteration >= cfg.iterations) {
            throw std::invalid_argument("resume: checkpoint already at or past target iterations");
        }
        st.config = cfg;
    } else {
        st.config = cfg;
        st.iteration = 0;
        st.theta0 = to_param_vector(init_weights(cfg.seed).layers);
        st.rule = make_rule(cfg);
        st.adam_theta = AdamState(st.theta0.size());
        for (const auto& group : rule_groups_pack(st.rule)) {
            st.adam_groups.emplace_back(group.size());
        }
        st.best = BestRecord{0, std::numeric_limits<double>::infinity(), 0.0};
    }

    const std::vector<Episode> val_set = validation_episodes(cfg);
    MLP net;
    net.layers = from_param_vector(kDefaultWidths, st.theta0);

    TrainResult result;
    Checkpoint last_good = st;
    const auto t0 = std::chrono::steady_clock::now();

    for (std::uint64_t iter = st.iteration + 1; iter <= cfg.iterations; ++iter) {
        std::vector<TaskResult> tasks(cfg.meta_batch);
        try {
            parallel_for(cfg.meta_batch, nthreads, [&](std::size_t j) {
                SplitMix64 rng = substream(cfg.seed, kStreamTrain, iter, j);
                const SineTask task = sample_task(rng);
                const Episode ep = sample_episode(task, cfg.k_shot, cfg.k_shot, rng);
                tasks[j] = task_meta_grads(net, ep, st.rule, cfg.meta_grad_mode, cfg.inner_steps);
            });

            ParamStack theta_sum = zeros_like(net.layers);
            RuleGrads rule_sum = zero_rule_grads(st.rule);
            double train_loss = 0.0;
            for (const TaskResult& tr : tasks) {
                stack_axpy(1.0, tr.theta_grad, theta_sum);
                accumulate_rule_grads(rule_sum, tr.rule_grads);
                train_loss += tr.adapted_eval_loss;
            }
            train_loss /= static_cast<double>(cfg.meta_batch);

            adam_step(st.adam_theta, st.theta0, to_param_vector(theta_sum), cfg.outer_lr);
            auto groups = rule_groups_pack(st.rule);
            const auto grad_groups = rule_grads_pack(st.rule, rule_sum);
            for (std::size_t g = 0; g < groups.size(); ++g) {
                adam_step(st.adam_groups[g], groups[g], grad_groups[g], cfg.outer_lr);
            }
            rule_groups_unpack(st.rule, groups);

            st.iteration = iter;
            net.layers = from_param_vector(kDefaultWidths, st.theta0);

            MetricsRow row;
            row.iteration = iter;
            row.train_loss = train_loss;
            row.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            if (iter % cfg.eval_every == 0) {
                const EvalResult val =
                    evaluate_episodes(net, st.rule, val_set, cfg.inner_steps, nthreads);
                st.negative_alpha_entries = count_negative_rates(st.rule);
                row.has_val = true;
                row.val_loss = val.mean_mse;
                row.val_ci = val.ci95;
                row.negative_alpha_entries = st.negative_alpha_entries;
                if (val.mean_mse < st.best.val_loss) {
                    st.best = BestRecord{iter, val.mean_mse, val.ci95};
                    result.best = st;
                }
            }
            if (on_metrics) on_metrics(row);
        } catch (const std::runtime_error& e) {
            throw NumericFailure(std::move(last_good), iter, e.what());
        }
        last_good = st;
    }

    result.last = std::move(st);
    return result;
}

SnnReport snn_decompose(const MLP& net, const DenseMatrix& m_init,
                        const std::vector<Episode>& tasks, const Episode& new_task, double alpha,
                        double beta) {
    const std::size_t p = net.param_count();
    if (p > 200) {
        throw std::length_error("snn_decompose: net has " + std::to_string(p) +
                                " parameters, cap is 200");
    }
    if (m_init.rows() != p || m_init.cols() != p) {
        throw std::invalid_argument("snn_decompose: matrix must be param_count x param_count");
    }

    const auto widths = net.widths();
    const std::vector<double> theta = to_param_vector(net.layers);

    DenseMatrix m = m_init;
    DenseMatrix outer_sum(p, p);
    std::vector<std::vector<double>> train_grads, val_grads, val_grads_at_theta;
    train_grads.reserve(tasks.size());
    val_grads.reserve(tasks.size());
    val_grads_at_theta.reserve(tasks.size());

    for (const Episode& ep : tasks) {
        const std::vector<double> g =
            to_param_vector(loss_grad(net, ep.train_x, ep.train_y));
        const std::vector<double> mg = matvec(m, g);
        std::vector<double> adapted_theta(p);
        for (std::size_t i = 0; i < p; ++i) adapted_theta[i] = theta[i] - alpha * mg[i];
        MLP adapted;
        adapted.layers = from_param_vector(widths, adapted_theta);
        const std::vector<double> u =
            to_param_vector(loss_grad(adapted, ep.eval_x, ep.eval_y));
        const std::vector<double> u0 = to_param_vector(loss_grad(net, ep.eval_x, ep.eval_y));

        // SGD step on M: the meta-gradient is the outer product -alpha u g^T.
        for (std::size_t r = 0; r < p; ++r) {
            for (std::size_t c = 0; c < p; ++c) {
                m(r, c) += alpha * beta * u[r] * g[c];
                outer_sum(r, c) += u[r] * g[c];
            }
        }
        train_grads.push_back(g);
        val_grads.push_back(u);
        val_grads_at_theta.push_back(u0);
    }

    const std::vector<double> g_new =
        to_param_vector(loss_grad(net, new_task.train_x, new_task.train_y));

    SnnReport report;
    report.m_final = m;
    report.outer_sum = outer_sum;
    report.transformed = matvec(m, g_new);

    std::vector<double> rhs = matvec(m_init, g_new);
    std::vector<double> rhs_taylor = rhs;
    report.similarity.resize(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        double sim = 0.0;
        for (std::size_t k = 0; k < p; ++k) sim += train_grads[i][k] * g_new[k];
        report.similarity[i] = sim;
        const double w = beta * sim * alpha;
        for (std::size_t k = 0; k < p; ++k) {
            rhs[k] += w * val_grads[i][k];
            rhs_taylor[k] += w * val_grads_at_theta[i][k];
        }
    }

    double abs_err = 0.0, scale = 0.0, taylor_sq = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        abs_err = std::max(abs_err, std::abs(report.transformed[k] - rhs[k]));
        scale = std::max({scale, std::abs(report.transformed[k]), std::abs(rhs[k])});
        const double d = rhs[k] - rhs_taylor[k];
        taylor_sq += d * d;
    }
    report.eq_decomp_abs_error = abs_err;
    report.eq_decomp_rel_error = scale > 0.0 ? abs_err / scale : abs_err;
    report.taylor_residual = std::sqrt(taylor_sq);
    return report;
}

}  // namespace metacurv
