#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rectnet/dataset.hpp"
#include "rectnet/network.hpp"

namespace rectnet {

enum class MetricKind { ErrorRate, LogLoss };

std::string_view to_string(MetricKind kind);
MetricKind parse_metric_kind(std::string_view name);

/// Multiply the learning rate by `multiplier` once `epoch` epochs have completed.
struct LrStep {
  std::size_t epoch;
  double multiplier;

  friend bool operator==(const LrStep&, const LrStep&) = default;
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 128;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::vector<LrStep> lr_schedule;
  std::size_t eval_every = 1;
  MetricKind metric = MetricKind::ErrorRate;

  void validate() const;
  /// Learning rate used during epoch `epoch` (1-based).
  double learning_rate_at(std::size_t epoch) const;

  /// x0.1 after 60% and after 85% of the epochs.
  static std::vector<LrStep> default_schedule(std::size_t epochs);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct CurveRecord {
  std::size_t epoch = 0;
  double train_metric = 0.0;
  double eval_metric = 0.0;
  MetricKind kind = MetricKind::ErrorRate;

  friend bool operator==(const CurveRecord&, const CurveRecord&) = default;
};

/// Observation points for tests and logging. Each callback receives the
/// network mode at the moment of the event.
struct TrainHooks {
  std::function<void(std::size_t epoch, Mode mode)> on_update;
  std::function<void(std::size_t epoch, Mode mode)> on_eval;
  std::function<void(const CurveRecord&)> on_record;
};

struct TrainResult {
  std::vector<CurveRecord> curves;
  std::vector<double> epoch_mean_loss;  // mean minibatch loss per epoch, train mode
};

/// Minibatch SGD with momentum: v <- mu v - lr (g + lambda w), w <- w + v.
/// Updates happen in train mode. After the first epoch, every eval_every-th
/// epoch and the last epoch, both splits are scored in test mode and a
/// CurveRecord is emitted.
/// Throws DivergenceError on a non-finite loss.
TrainResult train(Network& net, const Dataset& train_set, const Dataset& eval_set, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Argmax error (first index wins ties), evaluated in test mode.
double error_rate(Network& net, const Dataset& ds, std::size_t batch_size = 32);

/// Mean negative log-probability of the true class, probabilities clamped to
/// at least 1e-15, evaluated in test mode.
double log_loss(Network& net, const Dataset& ds, std::size_t batch_size = 32);

double error_rate_from_logits(const Tensor& logits, std::span<const std::size_t> labels);
double log_loss_from_probabilities(const Tensor& probabilities, std::span<const std::size_t> labels);

/// CSV with header "epoch,train,eval,metric" and 9 significant digits.
std::string format_curves(std::span<const CurveRecord> records);
void write_curves(std::span<const CurveRecord> records, const std::filesystem::path& path);
std::vector<CurveRecord> read_curves(const std::filesystem::path& path);

/// Binary checkpoint: a text manifest (one "name rank dims..." line per
/// parameter, then "end") followed by the values as little-endian doubles.
void save_checkpoint(Network& net, const std::filesystem::path& path);
void load_checkpoint(Network& net, const std::filesystem::path& path);

}  // namespace rectnet
