#pragma once

#include <string>

#include "metacurv/tensor.hpp"
#include "metacurv/trainer.hpp"

namespace metacurv {

/// Raised for malformed config or checkpoint files; the CLI maps it to the
/// usage exit code.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shortest-of-17-significant-digits decimal form; parses back to the exact
/// same 64-bit value. Used for every float we write (JSON and CSV).
std::string format_double(double x);

/// Run description: the training config plus where to write and whether the
/// metrics stream hides wall-clock times for byte-stable reruns.
struct RunConfig {
    TrainConfig train;
    std::string out_dir = ".";
    bool deterministic = true;
};

/// Parses a run config JSON file. Unknown keys are rejected; `method` is
/// required; everything else falls back to the defaults.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& origin);

/// The config with defaults applied, echoed back as JSON.
std::string resolved_config_json(const RunConfig& cfg);

std::string checkpoint_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text, const std::string& origin);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// One-line JSON evaluation record (appended to a .jsonl results file).
std::string eval_record_json(const std::string& checkpoint_path, const EvalResult& result,
                             std::size_t k_shot, std::size_t inner_steps, std::uint64_t seed);

// Matrix dumps: comma-separated rows, no header, format_double() cells.
void write_matrix_csv(const DenseMatrix& m, const std::string& path);
DenseMatrix read_matrix_csv(const std::string& path);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row, Method method, std::uint64_t seed,
                            bool deterministic);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace metacurv
