#pragma once

// Seeded randomness. Perturbation draws come from a counter-based stream so a
// value depends only on (seed, point, replicate, component) and never on the
// order in which points are visited. Sequential needs (shuffles, bootstrap,
// weight init) use Rng, a thin wrapper over std::mt19937_64 with portable
// conversions (the std distributions are implementation-defined).

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace cktdesign {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hash a sequence of words into one 64-bit key.
constexpr std::uint64_t mix_keys(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto w : words) h = splitmix64(h ^ splitmix64(w));
  return h;
}

constexpr double to_unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;  // [0, 1)
}

/// Counter-based uniform draw in [0, 1).
constexpr double stream_uniform(std::uint64_t seed, std::uint64_t point, std::uint64_t replicate,
                                std::uint64_t component) noexcept {
  return to_unit_interval(mix_keys({seed, point, replicate, component}));
}

/// Derive an independent child seed.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(master ^ 0x243f6a8885a308d3ULL);
  for (auto w : path) h = splitmix64(h ^ splitmix64(w + 0x13198a2e03707344ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return to_unit_interval(engine_()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do v = engine_();
    while (v >= limit);
    return v % n;
  }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cktdesign
