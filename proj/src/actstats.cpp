#include "rectnet/actstats.hpp"

#include <cmath>
#include <fmt/format.h>
#include <ostream>

#include "rectnet/errors.hpp"

namespace rectnet {

namespace {

Tensor apply(const ActivationConfig& c, const Tensor& x, RngStream& rng, Mode mode) {
  switch (c.kind) {
    case ActivationKind::Identity: return x;
    case ActivationKind::Relu: return relu_forward(x);
    case ActivationKind::Leaky: return leaky_forward(x, LeakyParam{c.leaky_a});
    case ActivationKind::Prelu: return prelu_forward(x, PReluState::with_channels(1, c.prelu_init));
    case ActivationKind::Rrelu: {
      RReluParam p{c.rrelu_l, c.rrelu_u, std::nullopt};
      return rrelu_forward(x, p, mode, rng);
    }
  }
  throw InvalidParam("unknown activation kind");
}

double expected_slope(const ActivationConfig& c) {
  switch (c.kind) {
    case ActivationKind::Identity: return 1.0;
    case ActivationKind::Relu: return 0.0;
    case ActivationKind::Leaky: return 1.0 / c.leaky_a;
    case ActivationKind::Prelu: return c.prelu_init;
    case ActivationKind::Rrelu: return rrelu_expected_slope(c.rrelu_l, c.rrelu_u);
  }
  return 0.0;
}

}  // namespace

double rrelu_expected_slope(double l, double u) { return std::log(u / l) / (u - l); }

ActStatsReport activation_stats(const ActStatsOptions& options) {
  const auto& c = options.activation;
  c.validate();
  const std::size_t n = options.samples;
  if (n < kActStatsMinSamples) {
    throw InvalidParam(fmt::format("actstats needs at least {} samples, got {}", kActStatsMinSamples, n));
  }

  ActStatsReport report;
  report.samples = n;
  report.expected_slope = expected_slope(c);

  RngStream input_rng(options.seed, 0);
  RngStream act_rng(options.seed, 1);

  const Tensor symmetric = uniform_sample(input_rng, -1.0, 1.0, n);
  report.sparsity = sparsity(apply(c, symmetric, act_rng, Mode::Train));

  const Tensor negative = uniform_sample(input_rng, -1.0, 0.0, n);
  const Tensor y = apply(c, negative, act_rng, Mode::Train);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = y[i] / negative[i];
    sum += s;
    sum_sq += s * s;
  }
  const double dn = static_cast<double>(n);
  report.mean_slope = sum / dn;
  const double var = std::max(0.0, (sum_sq - dn * report.mean_slope * report.mean_slope) / (dn - 1.0));
  report.slope_std_error = std::sqrt(var / dn);

  const auto fail = [&](std::string what) { report.failures.push_back(std::move(what)); };
  if (c.kind == ActivationKind::Relu) {
    const double tol = 4.0 * std::sqrt(0.25 / dn);
    if (std::abs(report.sparsity - 0.5) > tol) fail(fmt::format("sparsity {} not within {} of 0.5", report.sparsity, tol));
  } else if (report.sparsity != 0.0) {
    fail(fmt::format("sparsity {} should be 0", report.sparsity));
  }

  if (c.kind == ActivationKind::Rrelu) {
    const double tol = 4.0 * report.slope_std_error;
    if (std::abs(report.mean_slope - report.expected_slope) > tol) {
      fail(fmt::format("mean slope {} not within 4 SE ({}) of {}", report.mean_slope, tol, report.expected_slope));
    }
    RReluParam p{c.rrelu_l, c.rrelu_u, std::nullopt};
    RngStream unused;
    const Tensor test_out = rrelu_forward(symmetric, p, Mode::Test, unused);
    report.rrelu_test_exact = bitwise_equal(test_out, leaky_forward(symmetric, LeakyParam{p.test_divisor()}));
    if (!report.rrelu_test_exact) fail("test-mode output differs from leaky a=(l+u)/2");
  } else if (std::abs(report.mean_slope - report.expected_slope) > 1e-12) {
    fail(fmt::format("mean slope {} differs from {}", report.mean_slope, report.expected_slope));
  }
  return report;
}

void print_actstats(const ActStatsOptions& options, const ActStatsReport& r, std::ostream& out) {
  out << fmt::format("activation      {}\n", options.activation.label());
  out << fmt::format("samples         {}\n", r.samples);
  out << fmt::format("sparsity        {:.6f}\n", r.sparsity);
  out << fmt::format("mean_slope      {:.9f} (se {:.3e})\n", r.mean_slope, r.slope_std_error);
  out << fmt::format("expected_slope  {:.9f}\n", r.expected_slope);
  if (options.activation.kind == ActivationKind::Rrelu) {
    out << fmt::format("test_vs_leaky   {}\n", r.rrelu_test_exact ? "EXACT" : "DIFFERENT");
  }
  for (const auto& f : r.failures) out << "FAIL: " << f << '\n';
  out << (r.passed() ? "actstats: ok\n" : "actstats: FAILED\n");
}

}  // namespace rectnet
