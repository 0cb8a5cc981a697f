#ifndef VREID_RNG_HPP
#define VREID_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace vreid {

// splitmix64 finalizer. All randomness in the toolkit derives from this
// single fixed algorithm so outputs are reproducible from the seed alone.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator: each call advances an internal counter and
// finalizes (state + counter) through splitmix64. Independent substreams are
// derived from a seed plus a list of integer keys, so per-sample streams can
// be opened in any order (or in parallel) without coupling.
class Rng {
 public:
  explicit Rng(std::uint64_t state) : state_(state) {}

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t s = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    for (std::uint64_t k : keys) s = splitmix64(s ^ (k + 0x9e3779b97f4a7c15ULL));
    return Rng(s);
  }

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64(state_ ^ counter_);
  }

  // Uniform double in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Multiply-shift mapping, no rejection.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream tags keep unrelated substreams of one seed apart.
namespace rngtag {
constexpr std::uint64_t kHeadFc1 = 1;
constexpr std::uint64_t kHeadClassifier = 2;
constexpr std::uint64_t kEpochOrder = 3;
constexpr std::uint64_t kBalancedDraw = 4;
constexpr std::uint64_t kSplitClasses = 5;
constexpr std::uint64_t kSplitQueries = 6;
constexpr std::uint64_t kSynthCentroid = 7;
constexpr std::uint64_t kSynthDomain = 8;
constexpr std::uint64_t kSynthCamera = 9;
constexpr std::uint64_t kSynthSample = 10;
constexpr std::uint64_t kSynthCounts = 11;
}  // namespace rngtag

}  // namespace vreid

#endif  // VREID_RNG_HPP
