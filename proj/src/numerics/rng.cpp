#include "difflab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace difflab {

namespace {

// Philox4x64-10 constants (Salmon et al.; same parameterization as numpy).
constexpr std::uint64_t kPhiloxM0 = 0xD2E7470EE14C6C93ull;
constexpr std::uint64_t kPhiloxM1 = 0xCA5A826395121157ull;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;

inline std::uint64_t mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t* hi) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  *hi = static_cast<std::uint64_t>(p >> 64);
  return static_cast<std::uint64_t>(p);
}

inline void philox_round(std::uint64_t x[4], std::uint64_t k0, std::uint64_t k1) {
  std::uint64_t hi0, hi1;
  const std::uint64_t lo0 = mulhilo(kPhiloxM0, x[0], &hi0);
  const std::uint64_t lo1 = mulhilo(kPhiloxM1, x[2], &hi1);
  const std::uint64_t y1 = x[1], y3 = x[3];
  x[0] = hi1 ^ y1 ^ k0;
  x[1] = lo1;
  x[2] = hi0 ^ y3 ^ k1;
  x[3] = lo0;
}

void philox_block(std::uint64_t c0, std::uint64_t c1, std::uint64_t k0,
                  std::uint64_t k1, std::uint64_t out[4]) {
  out[0] = c0;
  out[1] = c1;
  out[2] = 0;
  out[3] = 0;
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    philox_round(out, k0, k1);
  }
}

// SplitMix64 finalizer; used only to spread derive() labels.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

void RngStream::refill() {
  // Counter is bumped before the block is generated, matching numpy's
  // Philox bit stream for key = (seed, stream_id).
  ++counter_;
  philox_block(counter_, 0, seed_, stream_, block_);
  pos_ = 0;
}

std::uint64_t RngStream::next_u64() {
  if (pos_ >= 4) refill();
  return block_[pos_++];
}

double RngStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1-u keeps the log argument in (0,1].
  const double u1 = 1.0 - next_unit();
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw std::domain_error("next_below: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
  std::uint64_t v = next_u64();
  while (v > limit) v = next_u64();
  return v % n;
}

int RngStream::next_int(int lo, int hi) {
  if (hi < lo) throw std::domain_error("next_int: empty range");
  return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo) + 1));
}

RngStream RngStream::derive(std::uint64_t label) const {
  RngStream child(seed_);
  child.stream_ = mix64(stream_ ^ mix64(label));
  return child;
}

RngStream RngStream::derive(std::string_view label, std::uint64_t index) const {
  return derive(tag(label) ^ mix64(index + 0x9E3779B97F4A7C15ull));
}

std::vector<double> gaussian_sample(RngStream& rng, int dim) {
  if (dim < 1) throw std::domain_error("gaussian_sample: dim must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(dim));
  fill_gaussian(rng, out);
  return out;
}

void fill_gaussian(RngStream& rng, std::span<double> out) {
  for (double& v : out) v = rng.next_gaussian();
}

}  // namespace difflab
