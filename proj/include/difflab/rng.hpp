#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace difflab {

// Counter-based random stream (Philox4x64-10).  The generator state is just
// (seed, stream_id, draw counter): any (seed, stream_id) pair names a
// reproducible sequence, and child streams derived by label are statistically
// independent of the parent.  That is what lets Monte Carlo loops fan out
// across threads without changing results: worker i draws from
// rng.derive(i) no matter which thread runs it.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  // Independent child stream; does not advance this stream.
  RngStream derive(std::uint64_t label) const;
  RngStream derive(std::string_view label) const { return derive(tag(label)); }
  RngStream derive(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64();

  // Uniform on [0,1) with 53 random bits.
  double next_unit();

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Standard normal draw (Box-Muller; the paired value is cached).
  double next_gaussian();

  // Unbiased integer in [0, n), n >= 1.
  std::uint64_t next_below(std::uint64_t n);

  // Uniform timestep in [lo, hi] inclusive.
  int next_int(int lo, int hi);

  // Compile-time label hash (FNV-1a) for derive().
  static constexpr std::uint64_t tag(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  void refill();

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t block_[4] = {0, 0, 0, 0};
  int pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// dim independent standard normal draws; advances the stream.
std::vector<double> gaussian_sample(RngStream& rng, int dim);

void fill_gaussian(RngStream& rng, std::span<double> out);

// Deterministic Fisher-Yates shuffle driven by the stream.
template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace difflab
