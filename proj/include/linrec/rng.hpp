// Copyright 2026 The linrec authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace linrec {

// Deterministic random draws on top of std::mt19937_64. The engine itself is
// pinned bit-for-bit by the standard; the distribution helpers below are
// spelled out here because the std::*_distribution classes are
// implementation-defined and would break split portability across toolchains.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1): top 53 bits of one engine draw.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound). Maps a [0,1) draw through the bound;
  // the bias is < bound / 2^53, negligible for the index ranges used here.
  std::size_t next_index(std::size_t bound) {
    if (bound <= 1) return 0;
    std::size_t i = static_cast<std::size_t>(next_double() *
                                             static_cast<double>(bound));
    return i >= bound ? bound - 1 : i;
  }

  // Standard normal via Box-Muller on two uniform draws.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // In-place Fisher-Yates, descending index order.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = next_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  // First `count` elements of a Fisher-Yates pass over [0, n): a uniform
  // sample without replacement, order-stable for a given seed.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t count) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    if (count > n) count = n;
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + next_index(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
  }

private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace linrec
