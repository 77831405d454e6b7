#include "rectnet/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rectnet/errors.hpp"
#include "rectnet/layers.hpp"

namespace rectnet {

std::string_view to_string(MetricKind kind) { return kind == MetricKind::ErrorRate ? "error_rate" : "log_loss"; }

MetricKind parse_metric_kind(std::string_view name) {
  if (name == "error_rate") return MetricKind::ErrorRate;
  if (name == "log_loss") return MetricKind::LogLoss;
  throw InvalidParam(fmt::format("unknown metric '{}' (valid: error_rate, log_loss)", name));
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidParam(fmt::format("learning_rate must be a finite value >= 0, got {}", learning_rate));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidParam(fmt::format("momentum must be in [0,1), got {}", momentum));
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw InvalidParam(fmt::format("weight_decay must be >= 0, got {}", weight_decay));
  }
  if (batch_size == 0) throw InvalidParam("batch_size must be >= 1");
  if (epochs == 0) throw InvalidParam("epochs must be >= 1");
  if (eval_every == 0) throw InvalidParam("eval_every must be >= 1");
  for (const auto& s : lr_schedule) {
    if (!(s.multiplier > 0.0) || !std::isfinite(s.multiplier)) {
      throw InvalidParam(fmt::format("lr_schedule multiplier must be positive, got {}", s.multiplier));
    }
  }
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  double lr = learning_rate;
  for (const auto& s : lr_schedule) {
    if (epoch > s.epoch) lr *= s.multiplier;
  }
  return lr;
}

std::vector<LrStep> TrainConfig::default_schedule(std::size_t epochs) {
  return {LrStep{epochs * 60 / 100, 0.1}, LrStep{epochs * 85 / 100, 0.1}};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace {

std::size_t count_errors(const Tensor& logits, std::span<const std::size_t> labels) {
  const std::size_t batch = logits.dim(0), classes = logits.shape().numel_from(1);
  if (labels.size() != batch) throw ShapeMismatch("error_rate: label count differs from batch size");
  std::size_t wrong = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* row = logits.raw() + n * classes;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    wrong += (best != labels[n]);
  }
  return wrong;
}

double sum_nll(const Tensor& probabilities, std::span<const std::size_t> labels) {
  const std::size_t batch = probabilities.dim(0), classes = probabilities.shape().numel_from(1);
  if (labels.size() != batch) throw ShapeMismatch("log_loss: label count differs from batch size");
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    if (labels[n] >= classes) throw InvalidRange(fmt::format("log_loss: label {} >= {}", labels[n], classes));
    total -= std::log(std::max(probabilities[n * classes + labels[n]], 1e-15));
  }
  return total;
}

}  // namespace

double error_rate_from_logits(const Tensor& logits, std::span<const std::size_t> labels) {
  return static_cast<double>(count_errors(logits, labels)) / static_cast<double>(logits.dim(0));
}

double log_loss_from_probabilities(const Tensor& probabilities, std::span<const std::size_t> labels) {
  return sum_nll(probabilities, labels) / static_cast<double>(probabilities.dim(0));
}

namespace {

// Every step frees and reallocates the same few activation-sized buffers.
// Keeping them in the heap avoids a round of page faults per layer per step.
void keep_freed_buffers() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 * 1024 * 1024);
    return true;
  }();
  (void)once;
#endif
}

class ScopedMode {
 public:
  ScopedMode(Network& net, Mode mode) : net_(net), saved_(net.mode()) { net_.set_mode(mode); }
  ~ScopedMode() { net_.set_mode(saved_); }
  ScopedMode(const ScopedMode&) = delete;
  ScopedMode& operator=(const ScopedMode&) = delete;

 private:
  Network& net_;
  Mode saved_;
};

// Mean over the dataset of `per_batch(logits, labels)`, which returns a batch total.
template <typename F>
double evaluate(Network& net, const Dataset& ds, std::size_t batch_size, F&& per_batch) {
  if (ds.size() == 0) throw DataError("cannot evaluate an empty dataset");
  if (batch_size == 0) throw InvalidParam("evaluation batch size must be >= 1");
  ScopedMode test(net, Mode::Test);
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < ds.size(); begin += batch_size) {
    const std::size_t end = std::min(ds.size(), begin + batch_size);
    idx.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) idx[i - begin] = i;
    Batch b = gather(ds, idx);
    const Tensor& logits = net.forward(b.images);
    total += per_batch(logits, b.labels);
  }
  return total / static_cast<double>(ds.size());
}

double metric(Network& net, const Dataset& ds, MetricKind kind) {
  return kind == MetricKind::ErrorRate ? error_rate(net, ds) : log_loss(net, ds);
}

}  // namespace

double error_rate(Network& net, const Dataset& ds, std::size_t batch_size) {
  return evaluate(net, ds, batch_size, [](const Tensor& logits, const std::vector<std::size_t>& labels) {
    return static_cast<double>(count_errors(logits, labels));
  });
}

double log_loss(Network& net, const Dataset& ds, std::size_t batch_size) {
  return evaluate(net, ds, batch_size, [](const Tensor& logits, const std::vector<std::size_t>& labels) {
    return sum_nll(softmax_xent(logits, labels).probabilities, labels);
  });
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train(Network& net, const Dataset& train_set, const Dataset& eval_set, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  train_set.validate();
  eval_set.validate();
  keep_freed_buffers();

  std::vector<Param> params = net.params();
  std::vector<std::vector<double>> velocity;
  velocity.reserve(params.size());
  for (const auto& p : params) velocity.emplace_back(p.value.size(), 0.0);

  BatchIterator batches(train_set.size(), config.batch_size, config.seed);
  TrainResult result;
  std::vector<std::size_t> idx;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate_at(epoch);
    const auto order = batches.next_epoch();
    net.set_mode(Mode::Train);
    double loss_sum = 0.0;
    std::size_t steps = 0;

    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      idx.assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
      Batch b = gather(train_set, idx);

      net.zero_grad();
      const Tensor& logits = net.forward(b.images);
      const LossOutput out = softmax_xent(logits, b.labels);
      if (!std::isfinite(out.loss)) {
        throw DivergenceError(epoch, fmt::format("training diverged in epoch {}: loss is {}", epoch, out.loss));
      }
      net.backward(softmax_xent_backward(out, b.labels, logits.shape()));
      if (hooks.on_update) hooks.on_update(epoch, net.mode());

      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        auto& v = velocity[k];
        const double decay = p.decay ? config.weight_decay : 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
          v[i] = config.momentum * v[i] - lr * (p.grad[i] + decay * p.value[i]);
          p.value[i] += v[i];
        }
      }
      loss_sum += out.loss;
      ++steps;
    }
    result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(steps));

    if (epoch == 1 || epoch % config.eval_every == 0 || epoch == config.epochs) {
      net.set_mode(Mode::Test);
      if (hooks.on_eval) hooks.on_eval(epoch, net.mode());
      CurveRecord rec{epoch, metric(net, train_set, config.metric), metric(net, eval_set, config.metric),
                      config.metric};
      if (hooks.on_record) hooks.on_record(rec);
      result.curves.push_back(rec);
    }
  }
  net.set_mode(Mode::Test);
  return result;
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

std::string format_curves(std::span<const CurveRecord> records) {
  std::string out = "epoch,train,eval,metric\n";
  for (const auto& r : records) {
    out += fmt::format("{},{:.9g},{:.9g},{}\n", r.epoch, r.train_metric, r.eval_metric, to_string(r.kind));
  }
  return out;
}

void write_curves(std::span<const CurveRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << format_curves(records);
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

std::vector<CurveRecord> read_curves(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train,eval,metric") {
    throw DataError(fmt::format("'{}' is not a curve file (bad header)", path.string()));
  }
  std::vector<CurveRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string epoch, train_v, eval_v, kind;
    if (!std::getline(ss, epoch, ',') || !std::getline(ss, train_v, ',') || !std::getline(ss, eval_v, ',') ||
        !std::getline(ss, kind)) {
      throw DataError(fmt::format("malformed curve row '{}'", line));
    }
    records.push_back(CurveRecord{std::stoul(epoch), std::stod(train_v), std::stod(eval_v), parse_metric_kind(kind)});
  }
  return records;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kCheckpointMagic = "rectnet-checkpoint 1";

void write_le_double(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double read_le_double(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw DataError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(Network& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  const auto params = net.params();
  out << kCheckpointMagic << '\n';
  for (const auto& p : params) {
    out << p.name << ' ' << p.shape.size();
    for (auto d : p.shape) out << ' ' << d;
    out << '\n';
  }
  out << "end\n";
  for (const auto& p : params)
    for (double v : p.value) write_le_double(out, v);
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

void load_checkpoint(Network& net, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw DataError("not a rectnet checkpoint");
  auto params = net.params();
  for (const auto& p : params) {
    if (!std::getline(in, line)) throw DataError("checkpoint manifest truncated");
    std::stringstream ss(line);
    std::string name;
    std::size_t rank = 0;
    ss >> name >> rank;
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) ss >> d;
    if (!ss || name != p.name || shape != p.shape) {
      throw DataError(fmt::format("checkpoint entry '{}' does not match parameter '{}'", line, p.name));
    }
  }
  if (!std::getline(in, line) || line != "end") throw DataError("checkpoint has extra parameters");
  for (auto& p : params)
    for (auto& v : p.value) v = read_le_double(in);
}

}  // namespace rectnet
