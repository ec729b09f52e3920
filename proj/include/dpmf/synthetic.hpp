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
#ifndef DPMF_SYNTHETIC_HPP_
#define DPMF_SYNTHETIC_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dpmf/dataset.hpp"
#include "dpmf/rng.hpp"

namespace dpmf {

struct LowRankProblem {
  RatingDataset train;
  std::vector<RatingTriple> validation;
};

// Ratings 3 + <a_i, b_j> + N(0, noise^2) clipped to [1, 5], with rank-`rank`
// ground truth whose inner products have standard deviation `signal`. Each
// entry is
// observed with probability `density`; `validation_fraction` of the observed
// entries are held out.
inline LowRankProblem make_low_rank(std::size_t n_users, std::size_t n_items, std::size_t rank,
                                    double density, double noise, std::uint64_t seed,
                                    double validation_fraction = 0.1, double signal = 0.5) {
  auto rng = make_engine(seed, "synthetic-low-rank");
  const double sd = std::pow(signal * signal / static_cast<double>(rank), 0.25);
  std::normal_distribution<double> factor(0.0, sd), eps(0.0, noise);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> a(n_users * rank), b(n_items * rank);
  for (double& x : a) x = factor(rng);
  for (double& x : b) x = factor(rng);
  std::vector<RatingTriple> train, validation;
  for (std::uint32_t i = 0; i < n_users; ++i) {
    for (std::uint32_t j = 0; j < n_items; ++j) {
      if (unit(rng) >= density) continue;
      double r = 3.0;
      for (std::size_t d = 0; d < rank; ++d) r += a[i * rank + d] * b[j * rank + d];
      r = std::clamp(r + eps(rng), 1.0, 5.0);
      RatingTriple t{i, j, static_cast<float>(r)};
      (unit(rng) < validation_fraction ? validation : train).push_back(t);
    }
  }
  return {RatingDataset::from_triples(n_users, n_items, std::move(train), {1.0, 5.0}),
          std::move(validation)};
}

// Item popularity ∝ rank^-exponent (items get shuffled ids), user activity
// ∝ rank^-user_exponent, integer ratings 1..5. Duplicate draws collapse, so
// the result holds at most n_ratings triples.
inline RatingDataset make_power_law(std::size_t n_users, std::size_t n_items,
                                    std::size_t n_ratings, double exponent, std::uint64_t seed,
                                    double user_exponent = 0.5) {
  auto rng = make_engine(seed, "synthetic-power-law");
  auto zipf = [](std::size_t n, double s) {
    std::vector<double> w(n);
    for (std::size_t r = 0; r < n; ++r) w[r] = std::pow(static_cast<double>(r + 1), -s);
    return std::discrete_distribution<std::uint32_t>(w.begin(), w.end());
  };
  auto item_rank = zipf(n_items, exponent);
  auto user_rank = zipf(n_users, user_exponent);
  std::vector<std::uint32_t> item_of_rank(n_items), user_of_rank(n_users);
  std::iota(item_of_rank.begin(), item_of_rank.end(), 0u);
  std::iota(user_of_rank.begin(), user_of_rank.end(), 0u);
  std::shuffle(item_of_rank.begin(), item_of_rank.end(), rng);
  std::shuffle(user_of_rank.begin(), user_of_rank.end(), rng);
  std::uniform_int_distribution<int> stars(1, 5);
  std::vector<RatingTriple> triples;
  triples.reserve(n_ratings);
  for (std::size_t s = 0; s < n_ratings; ++s)
    triples.push_back({user_of_rank[user_rank(rng)], item_of_rank[item_rank(rng)],
                       static_cast<float>(stars(rng))});
  std::sort(triples.begin(), triples.end(), by_user_item);
  triples.erase(std::unique(triples.begin(), triples.end(),
                            [](const RatingTriple& x, const RatingTriple& y) {
                              return x.user == y.user && x.item == y.item;
                            }),
                triples.end());
  return RatingDataset::from_triples(n_users, n_items, std::move(triples), {1.0, 5.0});
}

}  // namespace dpmf

#endif  // DPMF_SYNTHETIC_HPP_
