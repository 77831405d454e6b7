#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rectnet/network.hpp"
#include "rectnet/train.hpp"

namespace rectnet {

/// One cell of the (architecture x activation) experiment matrix, read from a
/// flat `key=value` file. Blank lines and `#` comments are ignored; unknown
/// or repeated keys are errors.
struct ExperimentConfig {
  std::string model = "nin-reduced";  // nin | ndsb | nin-reduced | ndsb-reduced
  double width_factor = 0.25;
  ActivationConfig activation;

  std::string dataset = "synth";  // cifar10 | cifar100 | synth
  std::vector<std::filesystem::path> train_paths;
  std::vector<std::filesystem::path> eval_paths;
  std::size_t train_limit = 0;  // 0 keeps every example
  std::size_t eval_limit = 0;

  std::size_t synth_classes = 10;
  std::size_t synth_train_per_class = 200;
  std::size_t synth_eval_per_class = 50;
  double synth_noise = 1.0;

  TrainConfig train;
  /// Absent means TrainConfig::default_schedule(train.epochs).
  std::optional<std::vector<LrStep>> lr_schedule;

  std::filesystem::path output_dir = "runs";
  bool checkpoint = false;

  /// Type-level checks; with `check_files` also requires dataset files to exist.
  void validate(bool check_files) const;
  TrainConfig resolved_train_config() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text with every key; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

/// All keys accepted by parse_config, in serialization order.
const std::vector<std::string_view>& config_keys();

}  // namespace rectnet
