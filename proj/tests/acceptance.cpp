// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "expected_shapes.hpp"
#include "rectnet/activation.hpp"
#include "rectnet/actstats.hpp"
#include "rectnet/cli.hpp"
#include "rectnet/errors.hpp"
#include "rectnet/gradcheck.hpp"
#include "toy_oracle.hpp"

using namespace rectnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kGradcheckBudgetSeconds = 60.0;
constexpr std::size_t kAlgebraInputs = 20000;
constexpr std::size_t kRreluSamples = 100000;
constexpr double kRreluStdErrors = 4.0;
constexpr double kShapeBudgetSeconds = 5.0;
constexpr double kSmokeBudgetSeconds = 15.0 * 60.0;
constexpr double kSmokeMaxFinalError = 0.5;
constexpr double kOracleTolerance = 1e-12;

// Set to a directory holding data_batch_1.bin ... test_batch.bin to run the
// smoke on real CIFAR-10 images instead of synthetic ones.
constexpr const char* kCifarDirEnv = "RECTNET_CIFAR10_DIR";

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome gradcheck_suite() {
  const auto t0 = Clock::now();
  const auto results = run_gradchecks(default_gradcheck_suite());
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::vector<std::string> failed;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) failed.push_back(r.name);
  }
  Outcome o;
  o.pass = failed.empty() && secs < kGradcheckBudgetSeconds;
  o.detail = fmt::format("{} ops, worst rel err {:.2e} < {:.0e}, {:.1f}s < {:.0f}s", results.size(), worst,
                         kGradcheckTolerance, secs, kGradcheckBudgetSeconds);
  if (!failed.empty()) o.detail += ", failed: " + fmt::format("{}", fmt::join(failed, ", "));
  return o;
}

// Uniforms over several magnitudes plus signed zeros, denormals and extremes.
Tensor algebra_inputs(std::uint64_t seed) {
  RngStream rng(seed, 0);
  const double edges[] = {0.0, -0.0, std::numeric_limits<double>::denorm_min(),
                          -std::numeric_limits<double>::denorm_min(), 1e300, -1e300, 1.0, -1.0};
  Tensor x(Shape{kAlgebraInputs});
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto pick = rng.below(8);
    if (pick == 0) {
      x[i] = edges[rng.below(std::size(edges))];
    } else {
      x[i] = rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-10.0, 10.0));
    }
  }
  return x;
}

Outcome activation_algebra() {
  const Tensor x = algebra_inputs(101);
  Tensor sorted = x;
  std::sort(sorted.data().begin(), sorted.data().end());
  std::vector<std::string> broken;
  RngStream rng(101, 1);

  // positive identity and monotonicity for each kind
  const auto check_unit = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& f) {
    const Tensor y = f(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] >= 0 && !(y[i] == x[i])) {
        broken.push_back(name + " positive identity");
        break;
      }
    }
    const Tensor ys = f(sorted);
    for (std::size_t i = 1; i < ys.size(); ++i) {
      if (ys[i] < ys[i - 1]) {
        broken.push_back(name + " monotonicity");
        break;
      }
    }
  };
  check_unit("relu", [](const Tensor& t) { return relu_forward(t); });
  check_unit("leaky100", [](const Tensor& t) { return leaky_forward(t, LeakyParam{100}); });
  check_unit("leaky5.5", [](const Tensor& t) { return leaky_forward(t, LeakyParam{5.5}); });
  check_unit("prelu", [](const Tensor& t) { return prelu_forward(t, PReluState::with_channels(1)); });
  check_unit("rrelu.test", [&](const Tensor& t) {
    RReluParam p;
    return rrelu_forward(t, p, Mode::Test, rng);
  });
  {
    // train mode: each element is x / d with d > 0, so it keeps identity and sign
    RReluParam p;
    const Tensor y = rrelu_forward(x, p, Mode::Train, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if ((x[i] >= 0 && !(y[i] == x[i])) || (x[i] < 0 && !(y[i] <= 0 && y[i] >= x[i]))) {
        broken.push_back("rrelu.train identity/sign");
        break;
      }
    }
  }

  // reductions: PReLU slope 0 is ReLU, slope 1 is the identity
  if (!bitwise_equal(prelu_forward(x, PReluState::with_channels(1, 1.0)), x)) broken.push_back("slope 1 identity");
  {
    const Tensor a = prelu_forward(x, PReluState::with_channels(1, 0.0)), b = relu_forward(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (a[i] != b[i]) {
        broken.push_back("slope 0 relu");
        break;
      }
    }
  }
  if (sparsity(relu_forward(x)) < sparsity(leaky_forward(x, LeakyParam{100}))) broken.push_back("sparsity order");

  // bitwise identities over random parameters
  for (int trial = 0; trial < 25; ++trial) {
    const double l = 1.0 + rng.uniform(0.0, 10.0);
    const double u = l + rng.uniform(1e-3, 20.0);
    RReluParam p{l, u, std::nullopt};
    if (!bitwise_equal(rrelu_forward(x, p, Mode::Test, rng), leaky_forward(x, LeakyParam{(l + u) / 2}))) {
      broken.push_back(fmt::format("rrelu test != leaky at l={} u={}", l, u));
    }
    const double a = 1.0 + std::pow(10.0, rng.uniform(-3.0, 3.0));
    if (!bitwise_equal(prelu_forward(x, PReluState::with_channels(1, 1.0 / a)), leaky_forward(x, LeakyParam{a}))) {
      broken.push_back(fmt::format("prelu(1/a) != leaky at a={}", a));
    }
  }
  RReluParam defaults;
  if (!bitwise_equal(rrelu_forward(x, defaults, Mode::Test, rng), leaky_forward(x, LeakyParam{5.5}))) {
    broken.push_back("rrelu(3,8) test != leaky 5.5");
  }

  Outcome o;
  o.pass = broken.empty();
  o.detail = fmt::format("{} inputs, 5 unit kinds, 51 bitwise parameter draws", x.size());
  if (!broken.empty()) o.detail += ", broken: " + fmt::format("{}", fmt::join(broken, "; "));
  return o;
}

Outcome rrelu_statistics() {
  RngStream input(202, 0), act(202, 1);
  const Tensor x = uniform_sample(input, -1.0, 0.0, kRreluSamples);
  RReluParam p{3.0, 8.0, std::nullopt};
  const Tensor y = rrelu_forward(x, p, Mode::Train, act);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double slope = y[i] / x[i];
    s += slope;
    s2 += slope * slope;
  }
  const double n = double(kRreluSamples), mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / (n - 1));
  const double expected = std::log(8.0 / 3.0) / 5.0;
  const auto [lo, hi] = std::minmax_element(p.cached_divisors->data().begin(), p.cached_divisors->data().end());
  const bool in_range = *lo >= 3.0 && *hi < 8.0;
  const double z = (mean - expected) / se;

  Outcome o;
  o.pass = std::abs(z) < kRreluStdErrors && in_range;
  o.detail = fmt::format("mean slope {:.6f} vs {:.6f}, z={:+.2f} (|z| < {}), divisors in [{:.5f}, {:.5f}]", mean,
                         expected, z, kRreluStdErrors, *lo, *hi);
  return o;
}

Outcome architecture_shapes() {
  const auto t0 = Clock::now();
  std::vector<std::string> bad;
  for (std::size_t classes : {10u, 100u}) {
    const Network net = instantiate(build_nin(classes, {}), 1);
    for (auto& b : testing::shape_mismatches(net, testing::expected_nin(classes))) bad.push_back("nin: " + b);
  }
  const Network ndsb = instantiate(build_ndsb({}), 1);
  for (auto& b : testing::shape_mismatches(ndsb, testing::expected_ndsb())) bad.push_back("ndsb: " + b);
  const double secs = seconds_since(t0);

  Outcome o;
  o.pass = bad.empty() && secs < kShapeBudgetSeconds;
  o.detail = fmt::format("nin 32-16-8-1 (10/100 logits), ndsb 70-35-17-8 (121 logits), {:.2f}s < {:.0f}s", secs,
                         kShapeBudgetSeconds);
  if (!bad.empty()) o.detail += ", mismatches: " + fmt::format("{}", fmt::join(bad, "; "));
  return o;
}

// The five activation rows of the comparison table.
std::vector<ActivationConfig> table_rows() {
  std::vector<ActivationConfig> rows(5);
  rows[0].kind = ActivationKind::Relu;
  rows[1].kind = ActivationKind::Leaky;
  rows[1].leaky_a = 100;
  rows[2].kind = ActivationKind::Leaky;
  rows[2].leaky_a = 5.5;
  rows[3].kind = ActivationKind::Prelu;
  rows[4].kind = ActivationKind::Rrelu;
  rows[4].rrelu_l = 3;
  rows[4].rrelu_u = 8;
  return rows;
}

ExperimentConfig smoke_config(const ActivationConfig& act, const fs::path& out) {
  ExperimentConfig c;
  c.model = "nin-reduced";
  c.width_factor = 0.25;
  c.activation = act;
  const char* cifar = std::getenv(kCifarDirEnv);
  if (cifar != nullptr && fs::exists(fs::path(cifar) / "data_batch_1.bin")) {
    c.dataset = "cifar10";
    c.train_paths = {fs::path(cifar) / "data_batch_1.bin"};
    c.eval_paths = {fs::path(cifar) / "test_batch.bin"};
    c.train_limit = 2000;
    c.eval_limit = 200;
  } else {
    c.dataset = "synth";
    c.synth_classes = 10;
    c.synth_train_per_class = 200;
    c.synth_eval_per_class = 20;
    c.synth_noise = 0.7;
  }
  c.train.learning_rate = 0.005;
  c.train.momentum = 0.9;
  c.train.weight_decay = 1e-4;
  c.train.batch_size = 32;
  c.train.epochs = 15;
  c.train.seed = 1;
  c.train.eval_every = 5;
  c.output_dir = out;
  return c;
}

struct SmokeState {
  fs::path dir;
  fs::path determinism_curves;
  ExperimentConfig determinism_config;
};

Outcome training_smoke(SmokeState& state) {
  const auto t0 = Clock::now();
  std::vector<std::string> notes, problems;
  for (const auto& act : table_rows()) {
    const ExperimentConfig c = smoke_config(act, state.dir);
    const auto t1 = Clock::now();
    try {
      std::ostringstream log;
      const RunOutputs r = run_experiment(c, log);
      const auto& curves = r.result.curves;
      const double first = curves.front().train_metric, last = curves.back().train_metric;
      notes.push_back(fmt::format("{} {:.3f}->{:.3f} ({:.0f}s)", act.label(), first, last, seconds_since(t1)));
      if (curves.front().epoch != 1 || curves.back().epoch != c.train.epochs) problems.push_back(act.label() + " epochs");
      if (!(last < first)) problems.push_back(act.label() + " did not decrease");
      if (!(last < kSmokeMaxFinalError)) problems.push_back(act.label() + " final error too high");
      if (act.kind == ActivationKind::Rrelu) {
        state.determinism_curves = r.curves;
        state.determinism_config = c;
      }
    } catch (const DivergenceError& e) {
      problems.push_back(fmt::format("{} diverged at epoch {}", act.label(), e.epoch()));
    } catch (const std::exception& e) {
      problems.push_back(act.label() + ": " + e.what());
    }
  }
  const double secs = seconds_since(t0);
  if (!(secs < kSmokeBudgetSeconds)) problems.push_back("over time budget");

  Outcome o;
  o.pass = problems.empty();
  o.detail = fmt::format("{}; total {:.0f}s < {:.0f}s", fmt::join(notes, ", "), secs, kSmokeBudgetSeconds);
  if (!problems.empty()) o.detail += "; problems: " + fmt::format("{}", fmt::join(problems, "; "));
  return o;
}

Outcome determinism(const SmokeState& state) {
  Outcome o;
  if (state.determinism_curves.empty() || !fs::exists(state.determinism_curves)) {
    o.detail = "no completed smoke run to repeat";
    return o;
  }
  const std::string first = read_file(state.determinism_curves);
  ExperimentConfig again = state.determinism_config;
  again.output_dir = state.dir / "repeat";
  std::ostringstream log;
  const RunOutputs r = run_experiment(again, log);
  const std::string second = read_file(r.curves);
  o.pass = !first.empty() && first == second;
  o.detail = fmt::format("{} rerun, {} bytes, {}", again.activation.label(), second.size(),
                         o.pass ? "identical" : "DIFFERENT");
  return o;
}

Outcome oracle_equivalence() {
  const auto r = testing::toy_oracle_step();
  Outcome o;
  o.pass = r.max_rel_diff < kOracleTolerance && r.params_compared > 0;
  o.detail = fmt::format("{} params, max rel diff {:.2e} < {:.0e}", r.params_compared, r.max_rel_diff,
                         kOracleTolerance);
  return o;
}

}  // namespace

int main() {
  SmokeState smoke;
  smoke.dir = fs::temp_directory_path() / fmt::format("rectnet_acceptance_{}", ::getpid());
  fs::remove_all(smoke.dir);
  fs::create_directories(smoke.dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-check suite", gradcheck_suite},
      {"activation algebra", activation_algebra},
      {"rrelu statistics", rrelu_statistics},
      {"architecture fidelity", architecture_shapes},
      {"training smoke", [&] { return training_smoke(smoke); }},
      {"determinism", [&] { return determinism(smoke); }},
      {"oracle equivalence", oracle_equivalence},
  };

  int failures = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::cout << fmt::format("{} {} [{:.1f}s] {}", o.pass ? "PASS" : "FAIL", name, seconds_since(t0), o.detail)
              << std::endl;
  }
  fs::remove_all(smoke.dir);
  return failures == 0 ? 0 : 1;
}
