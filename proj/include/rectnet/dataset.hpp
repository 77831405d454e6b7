#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rectnet/rng.hpp"
#include "rectnet/tensor.hpp"

namespace rectnet {

struct Dataset {
  Tensor images;  // (N, C, H, W)
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Shape example_shape() const;
  void validate() const;
};

inline constexpr std::size_t kCifarPixels = 3 * 32 * 32;

/// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes
/// (R, G, B planes, row-major). Pixels are scaled to [0, 1].
Dataset load_cifar10(std::span<const std::filesystem::path> paths);

/// CIFAR-100 binary files: coarse label byte, fine label byte, 3072 pixels.
/// The fine label is used.
Dataset load_cifar100(std::span<const std::filesystem::path> paths);

/// Noisy, randomly shifted copies of smooth per-class textures. Example i has
/// label i % num_classes, so any prefix of k * num_classes examples is
/// balanced. Each class texture is a wrapped 4x4 grid of N(0, 1) values per
/// channel, upsampled bilinearly; an example is that texture circularly
/// shifted by a uniform random offset plus N(0, noise^2) per pixel.
Dataset synth_blobs(std::size_t num_classes, std::size_t n_per_class, const Shape& example_shape, std::uint64_t seed,
                    double noise = 1.0);

/// Examples [begin, begin + count).
Dataset slice(const Dataset& ds, std::size_t begin, std::size_t count);

struct Batch {
  Tensor images;
  std::vector<std::size_t> labels;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);

/// Seeded per-epoch permutations. Epoch e's order depends only on (seed, e).
class BatchIterator {
 public:
  BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  /// Shuffled order for the next epoch; advances the epoch counter.
  std::vector<std::size_t> next_epoch();
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t batches_per_epoch() const noexcept { return (size_ + batch_size_ - 1) / batch_size_; }

 private:
  std::size_t size_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
};

}  // namespace rectnet
