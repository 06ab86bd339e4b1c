/*
 * Copyright 2026 The phonoprobe Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace phonoprobe {

/// Base class for all library errors. The CLI maps subtypes to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration, malformed input file, unknown flag (exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

/// Manifest/checkpoint inconsistency (exit code 3).
struct StateError : Error {
  using Error::Error;
};

/// Numerical failure: divergence, non-finite values (exit code 4).
struct NumericError : Error {
  using Error::Error;
};

/// Deterministic RNG. Only the raw mt19937_64 stream is taken from the
/// standard library; all transforms are implemented here so that the
/// produced sequences do not depend on the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform index in [0, n). Rejection sampling, no modulo bias.
  std::size_t uniform_index(std::size_t n);

  /// Uniform double in [0, 1) with 53 bits of randomness.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller. The spare value is discarded.
  double normal();

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a 64-bit hash, used for corpus/checkpoint fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 14695981039346656037ull);
std::uint64_t fnv1a64(const std::string& s);
std::string to_hex(std::uint64_t v);

/// Derives an independent stream seed from a base seed and a salt string.
std::uint64_t derive_seed(std::uint64_t base, const std::string& salt);

}  // namespace phonoprobe
