#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "rectnet/actstats.hpp"
#include "rectnet/config.hpp"
#include "rectnet/train.hpp"

namespace rectnet {

/// Overrides the root against which relative output directories resolve.
inline constexpr const char* kOutputRootEnv = "RECTNET_OUTPUT_ROOT";

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// `dir` itself if absolute or the env var is unset, else root / dir.
std::filesystem::path resolve_output_dir(const std::filesystem::path& dir);

/// "leaky:a=5.5" -> "leaky_a_5.5"
std::string file_token(const ActivationConfig& activation);

/// Rows ordered relu, leaky (larger a first), prelu, rrelu, then anything else.
bool results_row_before(const std::string& label_a, const std::string& label_b);

/// Inserts or replaces the row for `label` and rewrites the file sorted.
void update_results_table(const std::filesystem::path& path, const std::string& label, double train_metric,
                          double eval_metric);

struct ExperimentData {
  Dataset train;
  Dataset eval;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);

struct RunOutputs {
  std::filesystem::path output_dir;
  std::filesystem::path curves;
  std::filesystem::path results;
  std::optional<std::filesystem::path> checkpoint;
  TrainResult result;
};

/// Validates, loads data, builds and trains the model, writes outputs.
/// Progress goes to `log`. Throws on any failure.
RunOutputs run_experiment(const ExperimentConfig& config, std::ostream& log);

int cmd_train(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);
int cmd_gradcheck(std::ostream& out);
int cmd_actstats(const ActStatsOptions& options, std::ostream& out, std::ostream& err);

/// Full command line: train <config> | gradcheck | actstats <kind> [--a --l --u --n --seed].
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rectnet
