#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace fedq {

// Seeded pseudo-random stream.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The distribution helpers below are written out by hand because
// the std:: distributions are implementation-defined, and run artifacts must
// be byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound);

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (one variate per call, no caching so the
  // stream position depends only on the call count).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  double exponential(double rate);
  // Fills `out` with N(0, stddev^2) variates in pairs (Marsaglia polar
  // method), for bulk initialization.
  void fill_normal(std::span<double> out, double stddev);

  // Text form of the full engine state, for checkpoints.
  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

// Deterministic 64-bit mix (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

// Seed of the named sub-stream of a master seed:
//   mix64(master ^ fnv1a64(name))
// Streams with different names are decorrelated, and adding a new stream
// never shifts the draws of an existing one.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);

inline Rng substream(std::uint64_t master, std::string_view name) {
  return Rng(derive_seed(master, name));
}

// In-place Fisher-Yates shuffle driven by Rng::uniform_index.
template <typename Container>
void shuffle(Container& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace fedq
