#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tml {

// Deterministic RNG with hand-rolled draw functions. std::mt19937_64 is
// bit-stable across platforms but the std distributions are not, so every
// distribution used anywhere in the project lives here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // splitmix-style warmup so nearby seeds decorrelate
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0,n)
  uint64_t index(uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via the polar method; the spare value is discarded so a
  // single call consumes a deterministic amount of stream.
  double normal();

  // Draws an index with probability proportional to weights[i].
  size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Derives an independent child seed for a named substream (procedure id,
// fold index, sweep cell, ...). Results must not depend on the order in
// which substreams are consumed, so each substream gets its own Rng.
uint64_t mix_seed(uint64_t base, uint64_t stream);

}  // namespace tml
