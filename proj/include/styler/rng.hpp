// styler/rng.hpp

// Copyright 2026 The styler Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef STYLER_RNG_HPP_
#define STYLER_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace styler {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded RNG used everywhere randomness is needed. Float conversion is done
// from raw bits rather than std::uniform_real_distribution, so sequences are
// reproducible across standard library implementations. Independent streams
// are derived from a root seed plus a path of indices (step, batch slot, ...),
// which keeps training resumable without serializing generator state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(splitmix64(seed ^ 0x517cc1b727220a95ULL)) {}

  static Rng stream(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t h = splitmix64(seed ^ 0x2545f4914f6cdd1dULL);
    for (uint64_t p : path) h = splitmix64(h ^ (p + 0x9e3779b97f4a7c15ULL));
    return Rng(h);
  }

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 24 bits of precision.
  float uniform() { return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f); }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform_double() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  // Inclusive integer range.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = ~0ULL - ~0ULL % span;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return lo + static_cast<int64_t>(x % span);
  }

  // Standard normal via Box-Muller on the portable uniforms.
  float normal() {
    if (has_spare_) {
      has_spare_ = false;
      return static_cast<float>(spare_);
    }
    double u1 = uniform_double();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return static_cast<float>(r * std::cos(theta));
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace styler

#endif  // STYLER_RNG_HPP_
