#include "fedq/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "fedq/error.hpp"

namespace fedq {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t bound) {
  if (bound == 0) throw ArgumentError("uniform_index: bound must be positive");
  // Rejection sampling on the largest multiple of bound below 2^64.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = engine_();
    if (r >= threshold) return r % bound;
  }
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  // 1 - u1 lies in (0, 1], so the log is finite.
  return std::sqrt(-2.0 * std::log(1.0 - u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::fill_normal(std::span<double> out, double stddev) {
  // Marsaglia polar method.
  for (std::size_t i = 0; i < out.size(); i += 2) {
    double x, y, r2;
    do {
      x = 2.0 * uniform() - 1.0;
      y = 2.0 * uniform() - 1.0;
      r2 = x * x + y * y;
    } while (r2 >= 1.0 || r2 == 0.0);
    const double f = stddev * std::sqrt(-2.0 * std::log(r2) / r2);
    out[i] = x * f;
    if (i + 1 < out.size()) out[i + 1] = y * f;
  }
}

double Rng::exponential(double rate) {
  return -std::log(1.0 - uniform()) / rate;
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream in(text);
  in >> engine_;
  if (!in) throw DataError("rng state: unparsable engine state");
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(master ^ h);
}

}  // namespace fedq
