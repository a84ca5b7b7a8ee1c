// Copyright 2026 The MVU Mechanism Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MVU_RNG_HPP_
#define MVU_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace mvu {

// Seeded counter-style random stream (xoshiro256++ state initialized via
// splitmix64). Substreams derived from (root seed, stream id) are
// statistically independent of each other and of the parent's draw
// position, so client k in a simulation can be given derive(k) and the
// result does not depend on how many draws other clients made.
//
// We do not use the std::* distributions: their output sequences are
// implementation-defined, and experiment artifacts must be reproducible
// from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : root_seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  // Independent substream keyed by (root seed, stream). Does not consume
  // or depend on this stream's position.
  [[nodiscard]] Rng derive(std::uint64_t stream) const {
    std::uint64_t x = root_seed_ ^ (0x9e3779b97f4a7c15ULL + stream);
    x = splitmix64(x);
    return Rng(x ^ (stream * 0xbf58476d1ce4e5b9ULL));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard exponential (rate 1).
  double exponential() { return -std::log1p(-next_double()); }

  // Zero-mean unit-scale Laplace via inverse CDF.
  double laplace() {
    const double u = next_double() - 0.5;
    return u < 0 ? std::log1p(2.0 * u) : -std::log1p(-2.0 * u);
  }

  // Standard normal, Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
  }

  // Index draw from an (approximately normalized) probability vector.
  std::size_t categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: empty law");
    const double u = next_double();
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < probs.size(); ++j) {
      acc += probs[j];
      if (u < acc) return j;
    }
    return probs.size() - 1;
  }

  [[nodiscard]] std::uint64_t root_seed() const { return root_seed_; }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::uint64_t root_seed_;
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mvu

#endif  // MVU_RNG_HPP_
