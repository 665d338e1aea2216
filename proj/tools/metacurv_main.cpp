#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "metacurv/diagnostics.hpp"
#include "metacurv/io.hpp"
#include "metacurv/trainer.hpp"

namespace fs = std::filesystem;
using namespace metacurv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void check_resume_compatible(const TrainConfig& cfg, const TrainConfig& ckpt_cfg) {
    const bool same = cfg.method == ckpt_cfg.method && cfg.k_shot == ckpt_cfg.k_shot &&
                      cfg.inner_lr == ckpt_cfg.inner_lr && cfg.outer_lr == ckpt_cfg.outer_lr &&
                      cfg.meta_batch == ckpt_cfg.meta_batch &&
                      cfg.inner_steps == ckpt_cfg.inner_steps &&
                      cfg.meta_grad_mode == ckpt_cfg.meta_grad_mode &&
                      cfg.eval_every == ckpt_cfg.eval_every &&
                      cfg.eval_tasks == ckpt_cfg.eval_tasks && cfg.seed == ckpt_cfg.seed &&
                      cfg.per_step_curvature == ckpt_cfg.per_step_curvature;
    if (!same) {
        throw ConfigError("resume checkpoint was trained with a different configuration "
                          "(only 'iterations' may change)");
    }
}

int cmd_train(const std::string& config_path, const std::string& resume_path) {
    const RunConfig run = parse_run_config(config_path);
    fs::create_directories(run.out_dir);
    write_text_file((fs::path(run.out_dir) / "resolved_config.json").string(),
                    resolved_config_json(run));

    Checkpoint resume;
    const bool resuming = !resume_path.empty();
    if (resuming) {
        resume = load_checkpoint(resume_path);
        check_resume_compatible(run.train, resume.config);
        if (resume.iteration >= run.train.iterations) {
            throw ConfigError("resume checkpoint is already at iteration " +
                              std::to_string(resume.iteration));
        }
    }

    const fs::path metrics_path = fs::path(run.out_dir) / "metrics.csv";
    const bool fresh_metrics = !fs::exists(metrics_path) || fs::file_size(metrics_path) == 0;
    std::ofstream metrics(metrics_path, std::ios::binary | std::ios::app);
    if (!metrics) throw std::runtime_error("cannot open " + metrics_path.string());
    if (fresh_metrics) metrics << metrics_csv_header();

    const auto on_metrics = [&](const MetricsRow& row) {
        metrics << metrics_csv_row(row, run.train.method, run.train.seed, run.deterministic);
        if (row.has_val) {
            std::cout << "iter " << row.iteration << "  train " << row.train_loss << "  val "
                      << row.val_loss << " +/- " << row.val_ci;
            if (row.negative_alpha_entries > 0) {
                std::cout << "  negative-rates " << row.negative_alpha_entries;
            }
            std::cout << std::endl;
        }
    };

    const fs::path last_path = fs::path(run.out_dir) / "last.ckpt.json";
    const fs::path best_path = fs::path(run.out_dir) / "best.ckpt.json";
    try {
        const TrainResult result =
            meta_train(run.train, on_metrics, resuming ? &resume : nullptr);
        save_checkpoint(result.last, last_path.string());
        if (result.best) save_checkpoint(*result.best, best_path.string());
        std::cout << "done: iteration " << result.last.iteration << ", best val "
                  << result.last.best.val_loss << " at iteration " << result.last.best.iteration
                  << std::endl;
        return kExitOk;
    } catch (const NumericFailure& failure) {
        metrics.flush();
        save_checkpoint(failure.last_good, last_path.string());
        std::cerr << "numeric failure at " << failure.what()
                  << "; last good checkpoint written to " << last_path.string() << std::endl;
        return kExitRuntime;
    }
}

int cmd_eval(const std::string& ckpt_path, std::size_t tasks, std::size_t shots,
             std::size_t steps, std::uint64_t seed, const std::string& out_path) {
    if (tasks < 2) throw ConfigError("--tasks must be >= 2");
    if (steps == 0) throw ConfigError("--steps must be >= 1");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const std::size_t k = shots == 0 ? ckpt.config.k_shot : shots;
    const EvalResult result = evaluate(ckpt, tasks, k, steps, seed);
    std::cout << "MSE " << result.mean_mse << " +/- " << result.ci95 << " (95% CI, "
              << result.n_tasks << " tasks, " << k << "-shot, " << steps << " step"
              << (steps == 1 ? "" : "s") << ")" << std::endl;
    std::ofstream out(out_path, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    out << eval_record_json(ckpt_path, result, k, steps, seed);
    return kExitOk;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& out_dir) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const auto* mc = std::get_if<MetaCurv>(&ckpt.rule);
    if (!mc) {
        std::cout << "checkpoint method " << method_name(ckpt.config.method)
                  << " has no curvature matrices; nothing to dump" << std::endl;
        return kExitOk;
    }
    fs::create_directories(out_dir);

    auto summarize = [](const std::string& name, const DenseMatrix& m) {
        double diag = 0.0, off = 0.0;
        for (std::size_t r = 0; r < m.rows(); ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) {
                if (r == c) {
                    diag += m(r, c);
                } else {
                    off = std::max(off, std::abs(m(r, c)));
                }
            }
        std::cout << name << ": " << m.rows() << "x" << m.cols() << "  diag mean "
                  << diag / static_cast<double>(m.rows()) << "  max |off-diag| " << off
                  << std::endl;
    };

    for (std::size_t s = 0; s < mc->steps.size(); ++s) {
        const std::string step_prefix =
            mc->steps.size() > 1 ? "step" + std::to_string(s + 1) + "_" : "";
        for (std::size_t l = 0; l < mc->steps[s].size(); ++l) {
            for (const bool is_weight : {true, false}) {
                const CurvatureBlock& b =
                    is_weight ? mc->steps[s][l].weight : mc->steps[s][l].bias;
                const std::string base = step_prefix + "layer" + std::to_string(l + 1) +
                                         (is_weight ? "_weight" : "_bias");
                const struct {
                    const char* suffix;
                    const DenseMatrix* m;
                } factors[] = {{"Mo", &b.mo}, {"Mi", &b.mi}, {"Mf", &b.mf}};
                for (const auto& f : factors) {
                    const std::string name = base + "_" + f.suffix;
                    write_matrix_csv(*f.m, (fs::path(out_dir) / (name + ".csv")).string());
                    summarize(name, *f.m);
                }
                if (b.mo.rows() * b.mi.rows() * b.mf.rows() <= kMcExpandCap) {
                    const DenseMatrix expanded = mc_expand(b);
                    const std::string name = base + "_M_mc";
                    write_matrix_csv(expanded, (fs::path(out_dir) / (name + ".csv")).string());
                    summarize(name, expanded);
                }
            }
        }
    }
    return kExitOk;
}

int cmd_diag(const std::string& suite, std::uint64_t seed, std::size_t instances) {
    std::vector<DiagResult> results;
    if (suite == "algebra") {
        results = diag_algebra(seed, instances);
    } else if (suite == "gradients") {
        results = diag_gradients(seed);
    } else if (suite == "eq6") {
        results = diag_eq6(seed);
    } else if (suite == "eq8") {
        results = diag_eq8(seed);
    } else {
        throw ConfigError("unknown suite '" + suite + "' (algebra|gradients|eq6|eq8)");
    }
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": max err " << r.max_err
                  << " (tol " << r.tol << ")" << std::endl;
        ok = ok && r.pass;
    }
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-curvature few-shot regression benchmark"};
    app.require_subcommand(1);

    std::string config_path, resume_path;
    auto* train = app.add_subcommand("train", "run meta-training from a JSON config");
    train->add_option("--config", config_path, "run config JSON file")->required();
    train->add_option("--resume", resume_path, "checkpoint to continue from");

    std::string eval_ckpt, eval_out = "eval_results.jsonl";
    std::size_t eval_tasks = 600, eval_shots = 0, eval_steps = 1;
    std::uint64_t eval_seed = kDefaultEvalSeed;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on fresh tasks");
    eval_cmd->add_option("checkpoint", eval_ckpt, "checkpoint JSON file")->required();
    eval_cmd->add_option("--tasks", eval_tasks, "number of evaluation tasks");
    eval_cmd->add_option("--shots", eval_shots, "K-shot size (0 = from checkpoint)");
    eval_cmd->add_option("--steps", eval_steps, "adaptation steps");
    eval_cmd->add_option("--seed", eval_seed, "evaluation task stream seed");
    eval_cmd->add_option("--out", eval_out, "JSONL file to append the result record to");

    std::string inspect_ckpt, inspect_out;
    auto* inspect = app.add_subcommand("inspect", "dump curvature matrices to CSV");
    inspect->add_option("checkpoint", inspect_ckpt, "checkpoint JSON file")->required();
    inspect->add_option("--out", inspect_out, "output directory")->required();

    std::string diag_suite;
    std::uint64_t diag_seed = 42;
    std::size_t diag_instances = 200;
    auto* diag = app.add_subcommand("diag", "run a property suite");
    diag->add_option("--suite", diag_suite, "algebra|gradients|eq6|eq8")->required();
    diag->add_option("--seed", diag_seed, "suite seed");
    diag->add_option("--instances", diag_instances, "random instances for the algebra suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, resume_path);
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_ckpt, eval_tasks, eval_shots, eval_steps, eval_seed, eval_out);
        }
        if (inspect->parsed()) return cmd_inspect(inspect_ckpt, inspect_out);
        if (diag->parsed()) return cmd_diag(diag_suite, diag_seed, diag_instances);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitRuntime;
    }
    return kExitUsage;
}
