#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rectnet/network.hpp"

namespace rectnet {

inline constexpr std::size_t kActStatsMinSamples = 10000;

/// Expected negative-branch slope of RReLU in train mode: E[1/d] for
/// d ~ U(l, u), which is ln(u/l) / (u - l).
double rrelu_expected_slope(double l, double u);

struct ActStatsOptions {
  ActivationConfig activation;
  std::size_t samples = 100000;
  std::uint64_t seed = 7;
};

struct ActStatsReport {
  std::size_t samples = 0;
  double sparsity = 0.0;          // train-mode output on U(-1, 1) input
  double mean_slope = 0.0;        // mean y/x over U(-1, 0) input
  double slope_std_error = 0.0;
  double expected_slope = 0.0;
  /// Test-mode RReLU is bitwise equal to leaky ReLU with a = (l + u) / 2.
  bool rrelu_test_exact = false;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
};

/// Throws InvalidParam if fewer than kActStatsMinSamples samples are requested.
ActStatsReport activation_stats(const ActStatsOptions& options);

void print_actstats(const ActStatsOptions& options, const ActStatsReport& report, std::ostream& out);

}  // namespace rectnet
