// Copyright 2026 The vlmattack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Counter-based random streams used for every seeded quantity in the
// toolkit (reference-encoder weights, RGF directions, noise, fixtures).
//
// The generator is SplitMix64 addressed by counter instead of by state:
//
//   bits(seed, n) = fmix64(seed + (n + 1) * 0x9E3779B97F4A7C15)
//   fmix64(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//               z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//               return z ^ (z >> 31)
//
// so value n of a stream is the n-th output of a SplitMix64 generator seeded
// with `seed`, but can be computed without producing values 0..n-1.
//
// uniform(seed, n) = (bits(seed, n) >> 11) * 2^-53 in [0, 1).
//
// Standard normals use Box-Muller on counter pairs. For normal index i with
// pair p = i / 2:
//   u1 = ((bits(seed, 2p) >> 11) + 1) * 2^-53     in (0, 1]
//   u2 =  (bits(seed, 2p + 1) >> 11) * 2^-53      in [0, 1)
//   r  = sqrt(-2 ln u1)
//   normal(seed, i) = r cos(2 pi u2) for even i, r sin(2 pi u2) for odd i.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>

namespace vlmattack {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t fmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Mixes a base seed with a sequence of integers (e.g. step and sample
// indices) into an independent stream key.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = fmix64(base + kGoldenGamma);
  for (std::uint64_t p : parts) {
    h = fmix64(h ^ fmix64(p + kGoldenGamma));
  }
  return h;
}

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) : seed_(seed) {}

  constexpr std::uint64_t seed() const { return seed_; }

  constexpr std::uint64_t Bits(std::uint64_t n) const {
    return fmix64(seed_ + (n + 1) * kGoldenGamma);
  }

  double Uniform(std::uint64_t n) const {
    return static_cast<double>(Bits(n) >> 11) * 0x1.0p-53;
  }

  double Normal(std::uint64_t i) const {
    const std::uint64_t p = i / 2;
    const double u1 = static_cast<double>((Bits(2 * p) >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(Bits(2 * p + 1) >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return (i % 2 == 0) ? r * std::cos(theta) : r * std::sin(theta);
  }

  // out[k] = Normal(offset + k). Shares one log/sqrt per pair.
  void FillNormal(std::span<double> out, std::uint64_t offset = 0) const {
    std::size_t k = 0;
    if (offset % 2 == 1 && !out.empty()) {
      out[k++] = Normal(offset);
    }
    for (; k + 1 < out.size(); k += 2) {
      const std::uint64_t p = (offset + k) / 2;
      const double u1 =
          static_cast<double>((Bits(2 * p) >> 11) + 1) * 0x1.0p-53;
      const double u2 = static_cast<double>(Bits(2 * p + 1) >> 11) * 0x1.0p-53;
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double theta = 2.0 * std::numbers::pi * u2;
      out[k] = r * std::cos(theta);
      out[k + 1] = r * std::sin(theta);
    }
    if (k < out.size()) out[k] = Normal(offset + k);
  }

  // floor(Uniform(n) * bound), in [0, bound).
  std::uint64_t Below(std::uint64_t n, std::uint64_t bound) const {
    return static_cast<std::uint64_t>(Uniform(n) * static_cast<double>(bound));
  }

 private:
  std::uint64_t seed_;
};

}  // namespace vlmattack
