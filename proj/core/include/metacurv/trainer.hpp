#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metacurv/adam.hpp"
#include "metacurv/inner_rules.hpp"
#include "metacurv/mlp.hpp"
#include "metacurv/tasks.hpp"

namespace metacurv {

enum class Method { MAML, MetaSGD, LayerLR, MC1, MC2 };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct TrainConfig {
    Method method = Method::MAML;
    std::size_t k_shot = 5;
    double inner_lr = 0.01;
    double outer_lr = 0.001;
    std::size_t meta_batch = 25;
    std::uint64_t iterations = 70000;
    std::size_t inner_steps = 1;
    MetaGradMode meta_grad_mode = MetaGradMode::Exact;
    std::uint64_t eval_every = 1000;
    std::size_t eval_tasks = 200;
    std::uint64_t seed = 0;
    // Fresh curvature blocks per inner step instead of one shared set.
    // Only meaningful with inner_steps > 1.
    bool per_step_curvature = false;
};

/// Throws std::invalid_argument when counts are zero or the mode/step
/// combination is unsupported.
void validate_config(const TrainConfig& cfg);

struct BestRecord {
    std::uint64_t iteration = 0;
    double val_loss = 0.0;  // +inf until the first validation pass
    double val_ci = 0.0;
};

struct Checkpoint {
    int schema_version = 1;
    TrainConfig config;
    std::uint64_t iteration = 0;
    std::vector<double> theta0;  // flat parameters, see to_param_vector()
    InnerRule rule;
    AdamState adam_theta;
    std::vector<AdamState> adam_groups;  // aligned with rule_group_names(rule)
    BestRecord best;
    std::uint64_t negative_alpha_entries = 0;  // learned rates below zero (Meta-SGD/LayerLR)
};

/// Thrown when the outer loop hits non-finite numbers; carries the state at
/// the end of the last completed iteration so callers can persist it.
struct NumericFailure : std::runtime_error {
    NumericFailure(Checkpoint last, std::uint64_t iter, const std::string& what)
        : std::runtime_error("iteration " + std::to_string(iter) + ": " + what),
          last_good(std::move(last)),
          iteration(iter) {}
    Checkpoint last_good;
    std::uint64_t iteration;
};

struct MetricsRow {
    std::uint64_t iteration = 0;
    double train_loss = 0.0;  // batch mean of post-adaptation evaluation loss
    bool has_val = false;
    double val_loss = 0.0;
    double val_ci = 0.0;
    double wall_ms = 0.0;
    std::uint64_t negative_alpha_entries = 0;
};

using MetricsFn = std::function<void(const MetricsRow&)>;

struct TrainResult {
    Checkpoint last;
    std::optional<Checkpoint> best;  // set when a validation pass found a new minimum
};

/// Initial rule for a method: rates at inner_lr everywhere, curvature blocks
/// at identity, sized for the default 1-40-40-1 network.
InnerRule make_rule(const TrainConfig& cfg);

// Rule parameters flattened into named groups, one ADAM state per group
// ("Mo"/"Mi"/"Mf" for meta-curvature, "alpha" for learned rates, none for
// the fixed-rate rule).
std::vector<std::string> rule_group_names(const InnerRule& rule);
std::vector<std::vector<double>> rule_groups_pack(const InnerRule& rule);
void rule_groups_unpack(InnerRule& rule, const std::vector<std::vector<double>>& groups);
std::vector<std::vector<double>> rule_grads_pack(const InnerRule& rule, const RuleGrads& grads);

/// Outer training loop. Samples meta_batch tasks per iteration from
/// counter-based streams, accumulates theta and rule meta-gradients as plain
/// sums over the batch, applies one ADAM step per parameter group, and
/// validates on a fixed held-out episode set every eval_every iterations.
/// `resume` continues from a previous checkpoint (streams are derived from
/// (seed, iteration, task), so resumption is exact). threads = 0 picks
/// METACURV_THREADS or the hardware count.
TrainResult meta_train(const TrainConfig& cfg, const MetricsFn& on_metrics = nullptr,
                       const Checkpoint* resume = nullptr, std::size_t threads = 0);

inline constexpr std::size_t kEvalPointsPerTask = 100;
inline constexpr std::uint64_t kDefaultEvalSeed = 1234;

struct EvalResult {
    double mean_mse = 0.0;
    double ci95 = 0.0;  // 1.96 * sd / sqrt(n)
    std::size_t n_tasks = 0;
};

/// Adapts on each episode's K-shot set with the checkpoint's rule and
/// reports mean MSE on the evaluation sets with a 95% confidence half-width.
EvalResult evaluate(const Checkpoint& ckpt, std::size_t n_tasks, std::size_t k_shot,
                    std::size_t inner_steps, std::uint64_t eval_seed = kDefaultEvalSeed,
                    std::size_t threads = 0);

EvalResult evaluate_episodes(const MLP& net, const InnerRule& rule,
                             const std::vector<Episode>& episodes, std::size_t inner_steps,
                             std::size_t threads = 0);

/// One plain-SGD pass over `tasks` updating a full (unfactored) matrix M
/// with theta held fixed, then a decomposition of the transformed gradient
/// of a new task into the initial transform plus similarity-weighted
/// validation gradients, together with the first-order substitution
/// residual (gradients at theta in place of gradients at the adapted
/// parameters).
struct SnnReport {
    std::vector<double> similarity;   // <g_tr_i, g_new>
    std::vector<double> transformed;  // M_final * g_new
    double eq_decomp_abs_error = 0.0;
    double eq_decomp_rel_error = 0.0;
    double taylor_residual = 0.0;
    DenseMatrix m_final;
    DenseMatrix outer_sum;  // sum_i u_i g_i^T, accumulated independently
};

SnnReport snn_decompose(const MLP& net, const DenseMatrix& m_init,
                        const std::vector<Episode>& tasks, const Episode& new_task, double alpha,
                        double beta);

}  // namespace metacurv
