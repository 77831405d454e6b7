#pragma once

// One full-batch gradient-descent step on a dense -> leaky -> dense model,
// computed by hand with plain loops and compared with train().

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "rectnet/network.hpp"
#include "rectnet/train.hpp"

namespace rectnet::testing {

struct ToyOracleResult {
  double max_rel_diff = 0.0;
  std::size_t params_compared = 0;
};

inline ToyOracleResult toy_oracle_step(std::uint64_t seed = 17, double lr = 0.1) {
  constexpr std::size_t N = 6, D = 4, H = 5, K = 3;
  constexpr double kA = 5.5;

  RngStream rng(seed, 0);
  Dataset ds;
  ds.images = Tensor(Shape{N, D, 1, 1});
  for (double& v : ds.images.data()) v = rng.uniform(-2.0, 2.0);
  for (std::size_t n = 0; n < N; ++n) ds.labels.push_back(n % K);
  ds.num_classes = K;

  Network net(Shape{D, 1, 1}, seed);
  ActivationConfig act;
  act.kind = ActivationKind::Leaky;
  act.leaky_a = kA;
  auto x = net.add("fc1", std::make_unique<DenseLayer>(DenseSpec::zeros(D, H)), {0});
  x = net.add("act", std::make_unique<ActivationLayer>(act, H), {x});
  net.add("fc2", std::make_unique<DenseLayer>(DenseSpec::zeros(H, K)), {x});

  auto snapshot = [&net] {
    std::vector<std::vector<double>> v;
    for (const auto& p : net.params()) v.emplace_back(p.value.begin(), p.value.end());
    return v;
  };
  const auto before = snapshot();  // fc1.w (H x D), fc1.b, fc2.w (K x H), fc2.b
  const auto& W1 = before[0];
  const auto& b1 = before[1];
  const auto& W2 = before[2];
  const auto& b2 = before[3];

  // forward
  std::vector<double> z1(N * H), h(N * H), z2(N * K), p(N * K);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < H; ++j) {
      double s = b1[j];
      for (std::size_t i = 0; i < D; ++i) s += W1[j * D + i] * ds.images[n * D + i];
      z1[n * H + j] = s;
      h[n * H + j] = s >= 0 ? s : s / kA;
    }
    double m = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      double s = b2[k];
      for (std::size_t j = 0; j < H; ++j) s += W2[k * H + j] * h[n * H + j];
      z2[n * K + k] = s;
      m = std::max(m, s);
    }
    double z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(z2[n * K + k] - m);
    for (std::size_t k = 0; k < K; ++k) p[n * K + k] = std::exp(z2[n * K + k] - m) / z;
  }

  // backward of mean cross-entropy
  std::vector<double> gW1(H * D, 0), gb1(H, 0), gW2(K * H, 0), gb2(K, 0);
  for (std::size_t n = 0; n < N; ++n) {
    std::vector<double> dz2(K), dh(H, 0.0);
    for (std::size_t k = 0; k < K; ++k) dz2[k] = (p[n * K + k] - (ds.labels[n] == k ? 1.0 : 0.0)) / N;
    for (std::size_t k = 0; k < K; ++k) {
      gb2[k] += dz2[k];
      for (std::size_t j = 0; j < H; ++j) {
        gW2[k * H + j] += dz2[k] * h[n * H + j];
        dh[j] += dz2[k] * W2[k * H + j];
      }
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double dz1 = dh[j] * (z1[n * H + j] >= 0 ? 1.0 : 1.0 / kA);
      gb1[j] += dz1;
      for (std::size_t i = 0; i < D; ++i) gW1[j * D + i] += dz1 * ds.images[n * D + i];
    }
  }
  const std::vector<std::vector<double>> grads{gW1, gb1, gW2, gb2};

  TrainConfig c;
  c.learning_rate = lr;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  c.batch_size = N;
  c.epochs = 1;
  c.seed = seed;
  c.lr_schedule.clear();
  train(net, ds, ds, c);
  const auto after = snapshot();

  ToyOracleResult r;
  for (std::size_t t = 0; t < grads.size(); ++t) {
    for (std::size_t i = 0; i < grads[t].size(); ++i) {
      const double expected = before[t][i] - lr * grads[t][i];
      const double diff = std::abs(after[t][i] - expected) / std::max(std::abs(expected), 1e-300);
      r.max_rel_diff = std::max(r.max_rel_diff, diff);
      ++r.params_compared;
    }
  }
  return r;
}

}  // namespace rectnet::testing
