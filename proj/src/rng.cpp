#include "tml/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace tml {

uint64_t Rng::index(uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
  // rejection sampling over the largest multiple of n
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  while (true) {
    double u = uniform(-1.0, 1.0);
    double v = uniform(-1.0, 1.0);
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
}

size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) throw std::invalid_argument("Rng::categorical: nonpositive weight sum");
  double r = uniform() * total;
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (r < acc) return i;
  }
  return weights.size() - 1;
}

uint64_t mix_seed(uint64_t base, uint64_t stream) {
  uint64_t z = base ^ (0x9e3779b97f4a7c15ULL + (stream << 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tml
