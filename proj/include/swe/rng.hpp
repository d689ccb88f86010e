#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace swe {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Named sub-streams derived from the single run seed. Every consumer of
// randomness seeds its own stream via (seed, stream, index), so adding a
// consumer or reordering work never perturbs another stream.
enum class RngStream : std::uint64_t {
  Data = 1,      // per-sample initial-condition parameters
  Init = 2,      // network weight initialization
  Shuffle = 3,   // per-epoch minibatch shuffling
  EvalBatch = 4, // validation batch selection
};

inline std::uint64_t derive_seed(std::uint64_t seed, RngStream stream,
                                 std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
  return splitmix64(h ^ splitmix64(index));
}

// Deterministic generator with draw routines implemented here (not via
// std:: distributions) so output bytes are stable across standard
// libraries and compilers.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  Rng(std::uint64_t seed, RngStream stream, std::uint64_t index = 0)
      : eng_(derive_seed(seed, stream, index)) {}

  std::uint64_t bits() { return eng_(); }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive on both ends
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(eng_() % span);
  }

  double normal(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace swe
