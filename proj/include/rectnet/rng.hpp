#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "rectnet/tensor.hpp"

namespace rectnet {

/// Philox4x32-10 block function: 4x32-bit counter, 2x32-bit key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Counter-based random stream. The key is the seed, the upper half of the
/// counter is the stream id, so (seed, stream_id) pairs give independent
/// sequences and each layer can own one without coordination.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  /// Number of 64-bit words consumed so far.
  std::uint64_t position() const noexcept { return consumed_; }

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double next_double();

  /// Uniform on [lo, hi). Requires lo < hi.
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (one value per two uniforms, no caching).
  double normal();

  /// Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  /// Same values as calling next_double() once per element, generated in bulk.
  void fill_unit(std::span<double> out);

 private:
  std::array<std::uint64_t, 2> next_block();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  std::uint64_t consumed_ = 0;
};

/// `n` draws from U(lo, hi) as a 1-d tensor.
Tensor uniform_sample(RngStream& rng, double lo, double hi, std::size_t n);

/// Mixes a seed with a domain tag so related streams (init vs runtime) never
/// share a key.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t domain);

}  // namespace rectnet
