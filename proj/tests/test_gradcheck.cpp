#include <doctest.h>

#include <chrono>
#include <set>
#include <sstream>

#include "rectnet/gradcheck.hpp"

using namespace rectnet;

TEST_CASE("relative error") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
  // both tiny: the floor keeps rounding noise from counting
  CHECK(relative_error(1e-12, -1e-12) == doctest::Approx(2e-6));
}

TEST_CASE("check_gradient on a known function") {
  // f(x) = x^3 elementwise, r = 1: d/dx sum = 3x^2
  std::vector<double> x{0.5, -1.5, 2.0};
  const Tensor r(Shape{3}, 1.0);
  const auto f = [&] {
    Tensor y(Shape{3});
    for (std::size_t i = 0; i < 3; ++i) y[i] = x[i] * x[i] * x[i];
    return y;
  };
  const std::vector<double> good{0.75, 6.75, 12.0};
  CHECK(check_gradient(x, f, r, good) < 1e-8);
  const std::vector<double> bad{0.75, 6.75, 13.0};
  CHECK(check_gradient(x, f, r, bad) > 0.05);
  CHECK(x == std::vector<double>{0.5, -1.5, 2.0});
}

TEST_CASE("every op passes and is listed once") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto suite = default_gradcheck_suite();
  const auto results = run_gradchecks(suite);
  const auto elapsed = std::chrono::steady_clock::now() - t0;

  std::set<std::string> names;
  for (const auto& r : results) {
    INFO(r.name << " " << r.max_rel_error);
    CHECK(r.passed);
    CHECK(r.max_rel_error < kGradcheckTolerance);
    CHECK(names.insert(r.name).second);
  }
  for (const char* op : {"relu", "leaky", "prelu.input", "prelu.slope", "rrelu.test", "rrelu.train", "conv.input",
                         "conv.weights", "conv.bias", "maxpool", "avgpool", "dense.input", "dense.weights",
                         "dense.bias", "spp", "dropout", "split", "concat", "softmax_xent", "graph.params"}) {
    CHECK_MESSAGE(names.count(op) == 1, op);
  }
  CHECK(elapsed < std::chrono::seconds(60));

  std::ostringstream out;
  CHECK(report_gradchecks(results, out) == 0);
  for (const auto& n : names) {
    std::size_t count = 0;
    const std::string text = out.str();
    for (auto pos = text.find(n + " "); pos != std::string::npos; pos = text.find(n + " ", pos + 1)) {
      if (pos == 0 || text[pos - 1] == '\n') ++count;
    }
    CHECK_MESSAGE(count == 1, n);
  }
}

TEST_CASE("a corrupted prelu slope gradient is caught and named") {
  const PreluBackwardFn broken = [](const Tensor& x, const Tensor& g, PReluState& s) {
    Tensor gx = prelu_backward(x, g, s);
    for (double& v : s.slope_grads) v *= 1.01;
    return gx;
  };
  const GradCheck checks[] = {prelu_slope_check(4242, broken)};
  const auto results = run_gradchecks(checks);
  REQUIRE(results.size() == 1);
  CHECK_FALSE(results[0].passed);
  std::ostringstream out;
  CHECK(report_gradchecks(results, out) == 1);
  CHECK(out.str().find("prelu") != std::string::npos);
  CHECK(out.str().find("FAILED") != std::string::npos);

  const GradCheck intact[] = {prelu_slope_check(4242)};
  CHECK(run_gradchecks(intact)[0].passed);
}
