#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace driftsim {

/// Stream ids for the seed-splitting scheme. Every random draw in the
/// project flows from a single 64-bit master seed; independent consumers get
/// independent streams via stream_seed(master, id). Instance streams use
/// id = instance index; the named ids below reserve ranges for everything
/// else so no two consumers ever collide.
namespace stream_id {
inline constexpr std::uint64_t kInstanceBase = 0;            // + instance index
inline constexpr std::uint64_t kTrainerSampling = 1u << 30;  // action noise
inline constexpr std::uint64_t kTrainerShuffle = (1u << 30) + 1;
inline constexpr std::uint64_t kTrainerInit = (1u << 30) + 2;  // net params
inline constexpr std::uint64_t kPathPool = (1u << 30) + 3;     // + path index
inline constexpr std::uint64_t kEvalTrial = 1u << 31;        // + trial index
inline constexpr std::uint64_t kAblationBase = 3u << 30;     // + row index
}  // namespace stream_id

/// splitmix64 finalizer, used only to decorrelate seeds of the per-stream
/// mt19937_64 engines.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t id) {
  return splitmix64(master ^ splitmix64(id));
}

/// Seeded random stream: a standard mt19937_64 engine plus portable samplers.
/// The samplers avoid std::*_distribution on purpose; those are
/// implementation-defined, while the arithmetic below pins the exact draw
/// sequence so outputs are reproducible for a given seed.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng stream(std::uint64_t master, std::uint64_t id) {
    return Rng(stream_seed(master, id));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0. Rejection-free modulo is fine
  /// here; bias is ~n/2^64.
  std::uint64_t uniform_below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (cosine branch). Consumes exactly two
  /// engine outputs per call and carries no state between calls.
  double normal() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// In-place Fisher-Yates shuffle with a pinned draw sequence.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace driftsim
