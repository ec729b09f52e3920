//
// Copyright 2026 The dpmf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#ifndef DPMF_RNG_HPP_
#define DPMF_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace dpmf {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named substream of a master seed. Every random component ("init", "trim",
// "sgld-noise", "table", "ingest-shuffle", ...) draws from its own stream so
// changing how much one component consumes never perturbs another.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

inline Engine make_engine(std::uint64_t seed, std::string_view name,
                          std::uint64_t index = 0) {
  return Engine(derive_seed(seed, name, index));
}

}  // namespace dpmf

#endif  // DPMF_RNG_HPP_
