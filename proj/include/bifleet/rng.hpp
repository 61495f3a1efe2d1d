#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bifleet {

// Deterministic RNG wrapper. The standard distributions are
// implementation-defined, so every draw here is derived from raw mt19937_64
// output with fixed arithmetic; identical seeds give identical streams on
// any conforming platform.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t next_below(uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return next_double() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Draw an index from unnormalized nonnegative weights.
  size_t weighted_index(const std::vector<double>& weights);

  // Derive an independent child stream; used to give subsystems their own
  // reproducible sequences regardless of draw counts elsewhere.
  Rng fork(uint64_t salt) {
    uint64_t s = engine_();
    return Rng(s ^ (salt * 0x9e3779b97f4a7c15ull + 0xda3e39cb94b95bdbull));
  }

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

}  // namespace bifleet
