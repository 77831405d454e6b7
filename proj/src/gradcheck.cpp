#include "rectnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <ostream>

#include "rectnet/layers.hpp"
#include "rectnet/network.hpp"

namespace rectnet {

namespace {

Tensor random_tensor(const Shape& shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Same as random_tensor, but nothing within 0.05 of the kink at zero.
Tensor off_kink_tensor(const Shape& shape, RngStream& rng) {
  Tensor t = random_tensor(shape, rng);
  for (auto& v : t.data()) {
    if (std::abs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
  }
  return t;
}

// Distinct values spaced 0.01 apart in random order, so no max is ever tied
// or within one finite-difference step of a tie.
Tensor distinct_tensor(const Shape& shape, RngStream& rng) {
  Tensor t(shape);
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.data()[i] = 0.01 * static_cast<double>(order[i]) - 0.005 * static_cast<double>(t.size());
  }
  return t;
}

std::vector<double> copy(std::span<const double> s) { return {s.begin(), s.end()}; }

GradCheck input_check(std::string name, Tensor x, std::function<Tensor(const Tensor&)> f,
                      std::function<Tensor(const Tensor&, const Tensor&)> backward, RngStream rng) {
  return {std::move(name), [x = std::move(x), f = std::move(f), backward = std::move(backward), rng]() mutable {
            const Tensor r = random_tensor(f(x).shape(), rng);
            const Tensor analytic = backward(x, r);
            return check_gradient(x.data(), [&] { return f(x); }, r, analytic.data());
          }};
}

Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

std::unique_ptr<Network> graph_network(std::uint64_t seed) {
  auto net = std::make_unique<Network>(Shape{3, 8, 8}, seed);
  ActivationConfig prelu{ActivationKind::Prelu};
  ActivationConfig leaky{ActivationKind::Leaky, 5.5};
  ActivationConfig rrelu{ActivationKind::Rrelu};
  const auto c1 = net->add("conv1", std::make_unique<ConvLayer>(ConvSpec::same(3, 4, 3)), {0});
  const auto a1 = net->add("conv1.act", std::make_unique<ActivationLayer>(prelu, 4), {c1});
  const auto sp = net->add("split", std::make_unique<SplitLayer>(), {a1});
  const auto b1 = net->add("b1", std::make_unique<ConvLayer>(ConvSpec::same(4, 3, 1)), {sp});
  const auto b1a = net->add("b1.act", std::make_unique<ActivationLayer>(leaky, 3), {b1});
  const auto b2 = net->add("b2", std::make_unique<ConvLayer>(ConvSpec::same(4, 2, 3)), {sp});
  const auto b2a = net->add("b2.act", std::make_unique<ActivationLayer>(rrelu, 2), {b2});
  const auto cat = net->add("concat", std::make_unique<ConcatLayer>(), {b1a, b2a});
  const auto pool = net->add("pool", std::make_unique<PoolLayer>(PoolSpec{PoolKind::Avg, 2, 2, 2, 2, 0, 0}), {cat});
  const auto spp = net->add("spp", std::make_unique<SppLayer>(SppSpec{}), {pool});
  net->add("fc", std::make_unique<DenseLayer>(DenseSpec::zeros(5 * 21, 4)), {spp});
  net->set_mode(Mode::Test);
  return net;
}

GradCheck graph_check(std::uint64_t seed) {
  return {"graph.params", [seed] {
            RngStream rng(seed, 900);
            auto net = graph_network(seed);
            const Tensor x = random_tensor(Shape{2, 3, 8, 8}, rng);
            const std::vector<std::size_t> labels{1, 3};
            net->zero_grad();
            const LossOutput out = softmax_xent(net->forward(x), labels);
            net->backward(softmax_xent_backward(out, labels, net->forward(x).shape()));
            double worst = 0.0;
            for (auto& p : net->params()) {
              const auto analytic = copy(p.grad);
              worst = std::max(worst, check_gradient(p.value, [&] { return scalar(softmax_xent(net->forward(x), labels).loss); },
                                                     scalar(1.0), analytic));
            }
            return worst;
          }};
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

double check_gradient(std::span<double> x, const std::function<Tensor()>& f, const Tensor& r,
                      std::span<const double> analytic, double step) {
  double worst = 0.0;
  const auto rd = r.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const Tensor plus = f();
    x[i] = saved - step;
    const Tensor minus = f();
    x[i] = saved;
    double acc = 0.0;
    for (std::size_t j = 0; j < rd.size(); ++j) acc += rd[j] * (plus.data()[j] - minus.data()[j]);
    worst = std::max(worst, relative_error(analytic[i], acc / (2.0 * step)));
  }
  return worst;
}

GradCheck prelu_slope_check(std::uint64_t seed, PreluBackwardFn backward) {
  return {"prelu.slope", [seed, backward = std::move(backward)] {
            RngStream rng(seed, 11);
            const Tensor x = off_kink_tensor(Shape{2, 3, 4, 4}, rng);
            PReluState s = PReluState::with_channels(3);
            for (auto& v : s.slopes) v = rng.uniform(0.05, 0.5);
            const Tensor r = random_tensor(x.shape(), rng);
            s.zero_grad();
            backward(x, r, s);
            const auto analytic = s.slope_grads;
            return check_gradient(s.slopes, [&] { return prelu_forward(x, s); }, r, analytic);
          }};
}

std::vector<GradCheck> default_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheck> suite;
  std::uint64_t stream = 0;
  const auto next = [&] { return RngStream(seed, ++stream); };
  auto setup = next();

  suite.push_back(input_check(
      "relu", off_kink_tensor(Shape{2, 3, 4, 4}, setup), [](const Tensor& x) { return relu_forward(x); },
      [](const Tensor& x, const Tensor& g) { return relu_backward(x, g); }, next()));

  const LeakyParam leaky{5.5};
  suite.push_back(input_check(
      "leaky", off_kink_tensor(Shape{2, 3, 4, 4}, setup), [leaky](const Tensor& x) { return leaky_forward(x, leaky); },
      [leaky](const Tensor& x, const Tensor& g) { return leaky_backward(x, g, leaky); }, next()));

  auto prelu = PReluState::with_channels(3);
  for (auto& v : prelu.slopes) v = setup.uniform(0.05, 0.5);
  suite.push_back(input_check(
      "prelu.input", off_kink_tensor(Shape{2, 3, 4, 4}, setup),
      [prelu](const Tensor& x) { return prelu_forward(x, prelu); },
      [prelu](const Tensor& x, const Tensor& g) mutable { return prelu_backward(x, g, prelu); }, next()));
  suite.push_back(prelu_slope_check(seed));

  suite.push_back(input_check(
      "rrelu.test", off_kink_tensor(Shape{2, 3, 4, 4}, setup),
      [](const Tensor& x) {
        RReluParam p;
        RngStream unused;
        return rrelu_forward(x, p, Mode::Test, unused);
      },
      [](const Tensor& x, const Tensor& g) { return rrelu_backward(x, g, RReluParam{}, Mode::Test); }, next()));

  // Replaying the same stream draws the same divisors on every evaluation.
  const RngStream divisor_rng = next();
  suite.push_back(input_check(
      "rrelu.train", off_kink_tensor(Shape{2, 3, 4, 4}, setup),
      [divisor_rng](const Tensor& x) {
        RReluParam p;
        RngStream rng = divisor_rng;
        return rrelu_forward(x, p, Mode::Train, rng);
      },
      [divisor_rng](const Tensor& x, const Tensor& g) {
        RReluParam p;
        RngStream rng = divisor_rng;
        rrelu_forward(x, p, Mode::Train, rng);
        return rrelu_backward(x, g, p, Mode::Train);
      },
      next()));

  for (const bool strided : {false, true}) {
    ConvSpec spec = strided ? ConvSpec{2, 3, 3, 3, 2, 2, 0, 0, {}, {}} : ConvSpec::same(3, 4, 3);
    spec.weights = random_tensor(Shape{spec.out_channels, spec.in_channels, spec.kh, spec.kw}, setup);
    spec.bias = random_tensor(Shape{spec.out_channels}, setup);
    const Shape xs = strided ? Shape{2, 2, 7, 7} : Shape{2, 3, 6, 6};
    const std::string prefix = strided ? "conv.strided" : "conv";
    suite.push_back(input_check(
        prefix + ".input", random_tensor(xs, setup), [spec](const Tensor& x) { return conv_forward(x, spec); },
        [spec](const Tensor& x, const Tensor& g) { return conv_backward(x, g, spec).grad_x; }, next()));
    const Tensor x = random_tensor(xs, setup);
    for (const bool bias : {false, true}) {
      suite.push_back({prefix + (bias ? ".bias" : ".weights"), [spec, x, bias, rng = next()]() mutable {
                         const Tensor r = random_tensor(conv_output_shape(x.shape(), spec), rng);
                         const ConvGrads grads = conv_backward(x, r, spec);
                         const auto analytic = copy(bias ? grads.grad_b.data() : grads.grad_w.data());
                         return check_gradient(bias ? spec.bias.data() : spec.weights.data(),
                                               [&] { return conv_forward(x, spec); }, r, analytic);
                       }});
    }
  }

  for (const PoolKind kind : {PoolKind::Max, PoolKind::Avg}) {
    const PoolSpec spec{kind, 3, 3, 2, 2, 1, 1};
    suite.push_back(input_check(
        kind == PoolKind::Max ? "maxpool" : "avgpool", distinct_tensor(Shape{2, 2, 7, 7}, setup),
        [spec](const Tensor& x) { return pool_forward(x, spec); },
        [spec](const Tensor& x, const Tensor& g) { return pool_backward(x, g, spec); }, next()));
  }

  {
    DenseSpec spec = DenseSpec::zeros(16, 5);
    spec.weights = random_tensor(spec.weights.shape(), setup);
    spec.bias = random_tensor(spec.bias.shape(), setup);
    suite.push_back(input_check(
        "dense.input", random_tensor(Shape{3, 4, 2, 2}, setup), [spec](const Tensor& x) { return dense_forward(x, spec); },
        [spec](const Tensor& x, const Tensor& g) { return dense_backward(x, g, spec).grad_x; }, next()));
    const Tensor x = random_tensor(Shape{3, 16}, setup);
    for (const bool bias : {false, true}) {
      suite.push_back({bias ? "dense.bias" : "dense.weights", [spec, x, bias, rng = next()]() mutable {
                         const Tensor r = random_tensor(Shape{3, 5}, rng);
                         const DenseGrads grads = dense_backward(x, r, spec);
                         const auto analytic = copy(bias ? grads.grad_b.data() : grads.grad_w.data());
                         return check_gradient(bias ? spec.bias.data() : spec.weights.data(),
                                               [&] { return dense_forward(x, spec); }, r, analytic);
                       }});
    }
  }

  suite.push_back(input_check(
      "spp", distinct_tensor(Shape{2, 3, 6, 5}, setup), [](const Tensor& x) { return spp_forward(x, SppSpec{}); },
      [](const Tensor& x, const Tensor& g) { return spp_backward(x, g, SppSpec{}); }, next()));

  {
    const DropoutSpec spec{0.5};
    const RngStream mask_rng = next();
    suite.push_back(input_check(
        "dropout", random_tensor(Shape{2, 3, 4, 4}, setup),
        [spec, mask_rng](const Tensor& x) {
          RngStream rng = mask_rng;
          Tensor mask;
          return dropout_forward(x, spec, Mode::Train, rng, mask);
        },
        [spec, mask_rng](const Tensor& x, const Tensor& g) {
          RngStream rng = mask_rng;
          Tensor mask;
          dropout_forward(x, spec, Mode::Train, rng, mask);
          return dropout_backward(g, mask);
        },
        next()));
  }

  // L = sum(r_a * a) + sum(r_b * b) for (a, b) = split(x), read through a concat.
  suite.push_back(input_check(
      "split", random_tensor(Shape{2, 2, 3, 3}, setup),
      [](const Tensor& x) {
        auto [a, b] = split_forward(x);
        const Tensor* parts[] = {&a, &b};
        return concat_forward(parts);
      },
      [](const Tensor& x, const Tensor& g) {
        const Shape shapes[] = {x.shape(), x.shape()};
        const auto gs = concat_backward(g, shapes);
        return split_backward(gs[0], gs[1]);
      },
      next()));

  {
    const Tensor first = random_tensor(Shape{2, 2, 3, 3}, setup);
    suite.push_back(input_check(
        "concat", random_tensor(Shape{2, 3, 3, 3}, setup),
        [first](const Tensor& x) {
          const Tensor* parts[] = {&first, &x};
          return concat_forward(parts);
        },
        [first](const Tensor& x, const Tensor& g) {
          const Shape shapes[] = {first.shape(), x.shape()};
          return concat_backward(g, shapes)[1];
        },
        next()));
  }

  {
    const std::vector<std::size_t> labels{0, 5, 2, 2};
    suite.push_back({"softmax_xent", [labels, x = random_tensor(Shape{4, 6}, setup, -3.0, 3.0)]() mutable {
                       const LossOutput out = softmax_xent(x, labels);
                       const Tensor analytic = softmax_xent_backward(out, labels, x.shape());
                       return check_gradient(x.data(), [&] { return scalar(softmax_xent(x, labels).loss); }, scalar(1.0),
                                             analytic.data());
                     }});
  }

  suite.push_back(graph_check(seed));
  return suite;
}

std::vector<GradCheckResult> run_gradchecks(std::span<const GradCheck> checks, double tolerance) {
  std::vector<GradCheckResult> results;
  results.reserve(checks.size());
  for (const auto& check : checks) {
    const double err = check.run();
    results.push_back({check.name, err, std::isfinite(err) && err < tolerance});
  }
  return results;
}

int report_gradchecks(std::span<const GradCheckResult> results, std::ostream& out) {
  std::vector<std::string> failed;
  for (const auto& r : results) {
    out << fmt::format("{:<20} max_rel_err={:.3e} {}\n", r.name, r.max_rel_error, r.passed ? "ok" : "FAILED");
    if (!r.passed) failed.push_back(r.name);
  }
  if (failed.empty()) {
    out << fmt::format("gradcheck: all {} checks passed\n", results.size());
    return 0;
  }
  std::string names;
  for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
  out << fmt::format("gradcheck: {} of {} checks failed: {}\n", failed.size(), results.size(), names);
  return 1;
}

}  // namespace rectnet
