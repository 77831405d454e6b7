#include "rectnet/rng.hpp"

#include <cmath>
#include <fmt/format.h>
#include <numbers>

#include "rectnet/errors.hpp"

namespace rectnet {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 4> philox_rounds(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

inline double to_unit(std::uint64_t v) { return static_cast<double>(v >> 11) * 0x1.0p-53; }

constexpr std::size_t kLanes = 8;

// GCC/Clang vector extension: one 32-bit Philox word per 64-bit lane, so the
// 32x32 -> 64 products fit without overflow.
using U64Lanes = std::uint64_t __attribute__((vector_size(kLanes * sizeof(std::uint64_t))));
using F64Lanes = double __attribute__((vector_size(kLanes * sizeof(double))));

// philox_rounds on kLanes consecutive block indices at once. Emits 2 * kLanes
// doubles in the same order as consecutive next_double calls.
void philox_lanes(std::uint64_t first_block, std::uint64_t stream, std::uint64_t seed, double* out) {
  constexpr std::uint64_t kLow = 0xffffffffu;
  U64Lanes block;
  for (std::size_t l = 0; l < kLanes; ++l) block[l] = first_block + l;
  U64Lanes c0 = block & kLow, c1 = block >> 32;
  U64Lanes c2 = U64Lanes{} + (stream & kLow), c3 = U64Lanes{} + (stream >> 32);
  std::uint64_t k0 = seed & kLow, k1 = seed >> 32;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k0 = (k0 + kWeyl0) & kLow;
      k1 = (k1 + kWeyl1) & kLow;
    }
    const U64Lanes p0 = c0 * std::uint64_t{kMul0};
    const U64Lanes p1 = c2 * std::uint64_t{kMul1};
    c0 = (p1 >> 32) ^ c1 ^ k0;
    c1 = p1 & kLow;
    c2 = (p0 >> 32) ^ c3 ^ k1;
    c3 = p0 & kLow;
  }
  const F64Lanes lo = __builtin_convertvector(((c1 << 32) | c0) >> 11, F64Lanes) * 0x1.0p-53;
  const F64Lanes hi = __builtin_convertvector(((c3 << 32) | c2) >> 11, F64Lanes) * 0x1.0p-53;
  for (std::size_t l = 0; l < kLanes; ++l) {
    out[2 * l] = lo[l];
    out[2 * l + 1] = hi[l];
  }
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  return philox_rounds(ctr, key);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {}

std::uint64_t RngStream::next_u64() {
  if (buffered_ == 0) {
    buffer_ = next_block();
    buffered_ = 2;
  }
  ++consumed_;
  return buffer_[2 - buffered_--];
}

std::array<std::uint64_t, 2> RngStream::next_block() {
  const auto out = philox_rounds(
      {static_cast<std::uint32_t>(block_index_), static_cast<std::uint32_t>(block_index_ >> 32),
       static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)},
      {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
  ++block_index_;
  return {(static_cast<std::uint64_t>(out[1]) << 32) | out[0], (static_cast<std::uint64_t>(out[3]) << 32) | out[2]};
}

double RngStream::next_double() { return to_unit(next_u64()); }

void RngStream::fill_unit(std::span<double> out) {
  std::size_t i = 0;
  while (i < out.size() && buffered_ > 0) out[i++] = next_double();
  for (; i + 2 * kLanes <= out.size(); i += 2 * kLanes) {
    philox_lanes(block_index_, stream_id_, seed_, out.data() + i);
    block_index_ += kLanes;
    consumed_ += 2 * kLanes;
  }
  for (; i + 2 <= out.size(); i += 2) {
    const auto b = next_block();
    out[i] = to_unit(b[0]);
    out[i + 1] = to_unit(b[1]);
    consumed_ += 2;
  }
  if (i < out.size()) out[i] = next_double();
}

double RngStream::uniform(double lo, double hi) {
  if (!(lo < hi)) throw InvalidRange(fmt::format("uniform: need lo < hi, got [{}, {})", lo, hi));
  const double v = lo + (hi - lo) * next_double();
  // lo + (hi-lo)*u can round up to hi for u close to 1.
  return v < hi ? v : std::nextafter(hi, lo);
}

double RngStream::normal() {
  // 1 - u lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - next_double();
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t bound) {
  if (bound == 0) throw InvalidRange("below: bound must be positive");
  // Rejection on the top of the range keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

Tensor uniform_sample(RngStream& rng, double lo, double hi, std::size_t n) {
  if (!(lo < hi)) throw InvalidRange(fmt::format("uniform_sample: need lo < hi, got [{}, {})", lo, hi));
  if (n == 0) throw InvalidShape("uniform_sample: n must be positive");
  Tensor out = Tensor::uninitialized(Shape{n});
  rng.fill_unit(out.data());
  const double below_hi = std::nextafter(hi, lo);
  for (auto& v : out.data()) {
    v = lo + (hi - lo) * v;
    v = v < hi ? v : below_hi;
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t domain) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed ^ (domain * 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace rectnet
