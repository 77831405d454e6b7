#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rectnet/activation.hpp"
#include "rectnet/tensor.hpp"

namespace rectnet {

/// Central-difference step.
inline constexpr double kGradcheckStep = 1e-6;
/// Maximum relative error for a check to pass.
inline constexpr double kGradcheckTolerance = 1e-5;

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero entries from
/// dominating through rounding noise alone.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares `analytic` with the central difference of L(x) = sum(r * f(x)) in
/// every coordinate of `x`. Returns the max relative error.
double check_gradient(std::span<double> x, const std::function<Tensor()>& f, const Tensor& r,
                      std::span<const double> analytic, double step = kGradcheckStep);

struct GradCheck {
  std::string name;
  std::function<double()> run;  // max relative error
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

using PreluBackwardFn = std::function<Tensor(const Tensor& x, const Tensor& grad_out, PReluState& s)>;

/// The PReLU slope check on its own, with a replaceable backward.
GradCheck prelu_slope_check(std::uint64_t seed, PreluBackwardFn backward = prelu_backward);

/// Every differentiable op: activations (input and PReLU slope), conv,
/// pooling, dense, SPP, dropout with a fixed mask, split/concat, softmax
/// cross-entropy and a small composed graph.
std::vector<GradCheck> default_gradcheck_suite(std::uint64_t seed = 4242);

std::vector<GradCheckResult> run_gradchecks(std::span<const GradCheck> checks, double tolerance = kGradcheckTolerance);

/// Prints one line per check and names the failures. Returns 0 if all pass, 1 otherwise.
int report_gradchecks(std::span<const GradCheckResult> results, std::ostream& out);

}  // namespace rectnet
