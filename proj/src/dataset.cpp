#include "rectnet/dataset.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <iterator>

#include "rectnet/errors.hpp"

namespace rectnet {

Shape Dataset::example_shape() const {
  return Shape(std::vector<std::size_t>(images.shape().dims().begin() + 1, images.shape().dims().end()));
}

void Dataset::validate() const {
  if (images.rank() != 4) throw DataError("dataset images must be (N, C, H, W)");
  if (images.dim(0) != labels.size()) {
    throw DataError(fmt::format("dataset has {} images but {} labels", images.dim(0), labels.size()));
  }
  for (auto l : labels) {
    if (l >= num_classes) throw DataError(fmt::format("label {} out of range [0, {})", l, num_classes));
  }
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset load_cifar(std::span<const std::filesystem::path> paths, std::size_t label_bytes, std::size_t num_classes) {
  const std::size_t record = label_bytes + kCifarPixels;
  std::vector<std::vector<unsigned char>> files;
  std::size_t total = 0;
  for (const auto& p : paths) {
    auto bytes = read_bytes(p);
    if (bytes.empty() || bytes.size() % record != 0) {
      throw DataError(
          fmt::format("'{}': size {} is not a positive multiple of {} bytes (truncated?)", p.string(), bytes.size(), record));
    }
    total += bytes.size() / record;
    files.push_back(std::move(bytes));
  }
  if (total == 0) throw DataError("no CIFAR files given");

  Dataset ds{Tensor(Shape{total, 3, 32, 32}), {}, num_classes};
  ds.labels.reserve(total);
  double* out = ds.images.raw();
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto& bytes = files[f];
    for (std::size_t r = 0; r < bytes.size() / record; ++r) {
      const unsigned char* rec = bytes.data() + r * record;
      const std::size_t label = rec[label_bytes - 1];
      if (label >= num_classes) {
        throw DataError(fmt::format("'{}': record {} has label {} >= {}", paths[f].string(), r, label, num_classes));
      }
      ds.labels.push_back(label);
      for (std::size_t i = 0; i < kCifarPixels; ++i) *out++ = rec[label_bytes + i] / 255.0;
    }
  }
  return ds;
}

}  // namespace

Dataset load_cifar10(std::span<const std::filesystem::path> paths) { return load_cifar(paths, 1, 10); }

Dataset load_cifar100(std::span<const std::filesystem::path> paths) { return load_cifar(paths, 2, 100); }

Dataset synth_blobs(std::size_t num_classes, std::size_t n_per_class, const Shape& example_shape, std::uint64_t seed,
                    double noise) {
  if (num_classes == 0 || n_per_class == 0) throw InvalidParam("synth_blobs: need at least one class and example");
  if (example_shape.rank() != 3) throw InvalidShape("synth_blobs: example shape must be (C, H, W)");
  if (!(noise >= 0.0)) throw InvalidParam("synth_blobs: noise must be >= 0");
  const std::size_t channels = example_shape[0], height = example_shape[1], width = example_shape[2];
  const std::size_t pixels = example_shape.numel();
  constexpr std::size_t kGrid = 4;

  // Periodic class textures: a wrapped 4x4 grid per channel, interpolated bilinearly.
  RngStream mean_rng(seed, 0);
  std::vector<double> means(num_classes * pixels);
  std::vector<double> grid(kGrid * kGrid);
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (auto& g : grid) g = mean_rng.normal();
      double* plane = means.data() + k * pixels + c * height * width;
      for (std::size_t h = 0; h < height; ++h) {
        const double gy = static_cast<double>(h * kGrid) / static_cast<double>(height);
        const std::size_t y0 = static_cast<std::size_t>(gy), y1 = (y0 + 1) % kGrid;
        const double ty = gy - static_cast<double>(y0);
        for (std::size_t w = 0; w < width; ++w) {
          const double gx = static_cast<double>(w * kGrid) / static_cast<double>(width);
          const std::size_t x0 = static_cast<std::size_t>(gx), x1 = (x0 + 1) % kGrid;
          const double tx = gx - static_cast<double>(x0);
          const double top = grid[y0 * kGrid + x0] * (1 - tx) + grid[y0 * kGrid + x1] * tx;
          const double bottom = grid[y1 * kGrid + x0] * (1 - tx) + grid[y1 * kGrid + x1] * tx;
          plane[h * width + w] = top * (1 - ty) + bottom * ty;
        }
      }
    }
  }

  const std::size_t n = num_classes * n_per_class;
  std::vector<std::size_t> dims{n};
  dims.insert(dims.end(), example_shape.dims().begin(), example_shape.dims().end());
  Dataset ds{Tensor(Shape(dims)), std::vector<std::size_t>(n), num_classes};
  RngStream noise_rng(seed, 1);
  RngStream shift_rng(seed, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % num_classes;
    ds.labels[i] = k;
    const std::size_t dy = shift_rng.below(height), dx = shift_rng.below(width);
    double* img = ds.images.raw() + i * pixels;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* mean = means.data() + k * pixels + c * height * width;
      for (std::size_t h = 0; h < height; ++h) {
        const double* row = mean + ((h + dy) % height) * width;
        for (std::size_t w = 0; w < width; ++w) *img++ = row[(w + dx) % width] + noise * noise_rng.normal();
      }
    }
  }
  return ds;
}

Dataset slice(const Dataset& ds, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > ds.size()) {
    throw InvalidRange(fmt::format("slice [{}, {}) outside dataset of {}", begin, begin + count, ds.size()));
  }
  const Shape ex = ds.example_shape();
  std::vector<std::size_t> dims{count};
  dims.insert(dims.end(), ex.dims().begin(), ex.dims().end());
  const std::size_t pixels = ex.numel();
  const auto first = ds.images.data().begin() + static_cast<std::ptrdiff_t>(begin * pixels);
  return Dataset{Tensor(Shape(dims), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * pixels))),
                 std::vector<std::size_t>(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                          ds.labels.begin() + static_cast<std::ptrdiff_t>(begin + count)),
                 ds.num_classes};
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidRange("gather: empty index list");
  const Shape ex = ds.example_shape();
  const std::size_t pixels = ex.numel();
  std::vector<std::size_t> dims{indices.size()};
  dims.insert(dims.end(), ex.dims().begin(), ex.dims().end());
  Batch b{Tensor(Shape(dims)), {}};
  b.labels.reserve(indices.size());
  double* out = b.images.raw();
  for (auto i : indices) {
    if (i >= ds.size()) throw InvalidRange(fmt::format("gather: index {} >= {}", i, ds.size()));
    const double* src = ds.images.raw() + i * pixels;
    out = std::copy(src, src + pixels, out);
    b.labels.push_back(ds.labels[i]);
  }
  return b;
}

BatchIterator::BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed) {
  if (dataset_size == 0) throw InvalidParam("BatchIterator: empty dataset");
  if (batch_size == 0) throw InvalidParam("BatchIterator: batch size must be >= 1");
}

std::vector<std::size_t> BatchIterator::next_epoch() {
  std::vector<std::size_t> order(size_);
  for (std::size_t i = 0; i < size_; ++i) order[i] = i;
  // Fisher-Yates with our own stream; std::shuffle is implementation-defined.
  RngStream rng(derive_seed(seed_, 0x5eed), epoch_);
  for (std::size_t i = size_ - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  ++epoch_;
  return order;
}

}  // namespace rectnet
