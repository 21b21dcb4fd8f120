#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace spoter {

namespace detail {
// splitmix64 finalizer; used for deriving child stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Deterministic random stream. All draws are built on top of the
// standard-pinned mt19937_64 output, so sequences are identical across
// platforms. std::*_distribution is never used (its algorithm is
// implementation-defined).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // One engine output -> one double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n). Consumes exactly one draw.
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * n);
    return v < n ? v : n - 1;
  }

  // Fisher-Yates; consumes size()-1 draws.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Child stream keyed by up to three tags. Does not consume from this
  // stream, so derivation order is irrelevant.
  Rng split(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    using detail::mix64;
    return Rng(mix64(seed_ ^ mix64(a ^ mix64(b ^ mix64(c)))));
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace spoter
