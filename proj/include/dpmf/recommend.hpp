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
#ifndef DPMF_RECOMMEND_HPP_
#define DPMF_RECOMMEND_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "dpmf/dataset.hpp"
#include "dpmf/errors.hpp"
#include "dpmf/model.hpp"
#include "dpmf/rng.hpp"

namespace dpmf {

// In-place LDL^T solve of the symmetric system a x = b (a is k x k,
// row-major, destroyed). Square-root free, so diagonal systems solve
// exactly. False when a is not numerically positive definite.
inline bool ldlt_solve(std::vector<double>& a, std::vector<double>& b, std::size_t k) {
  double scale = 0;
  for (std::size_t j = 0; j < k; ++j) scale = std::max(scale, std::abs(a[j * k + j]));
  const double floor = 1e-12 * scale;
  for (std::size_t j = 0; j < k; ++j) {
    double d = a[j * k + j];
    for (std::size_t p = 0; p < j; ++p) d -= a[j * k + p] * a[j * k + p] * a[p * k + p];
    if (!(d > floor)) return false;
    a[j * k + j] = d;
    for (std::size_t i = j + 1; i < k; ++i) {
      double s = a[i * k + j];
      for (std::size_t p = 0; p < j; ++p) s -= a[i * k + p] * a[j * k + p] * a[p * k + p];
      a[i * k + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t p = 0; p < i; ++p) b[i] -= a[i * k + p] * b[p];
  for (std::size_t i = 0; i < k; ++i) b[i] /= a[i * k + i];
  for (std::size_t i = k; i-- > 0;)
    for (std::size_t p = i + 1; p < k; ++p) b[i] -= a[p * k + i] * b[p];
  return true;
}

// u = (lambda I + sum_j v_j v_j^T)^{-1} sum_j v_j r_j over the user's own
// ratings (only item and rating of each triple are used).
inline std::vector<double> local_fit(const FactorModel& items, std::span<const RatingTriple> ratings,
                                     double lambda) {
  if (lambda < 0) throw std::invalid_argument("lambda must be non-negative");
  const std::size_t k = items.k();
  std::vector<double> gram(k * k, 0.0), rhs(k, 0.0);
  for (std::size_t d = 0; d < k; ++d) gram[d * k + d] = lambda;
  for (const auto& t : ratings) {
    auto v = items.item(t.item);
    for (std::size_t a = 0; a < k; ++a) {
      rhs[a] += v[a] * t.rating;
      for (std::size_t b = 0; b < k; ++b) gram[a * k + b] += v[a] * v[b];
    }
  }
  if (ratings.empty() && lambda > 0) return rhs;
  if (!ldlt_solve(gram, rhs, k))
    throw SingularSystemError("local ridge system is singular; use lambda > 0");
  return rhs;
}

struct ScoredItem {
  std::uint32_t item;
  double score;
};

// Top `n` items by <u, v_j>, skipping `exclude`; ties go to the lower id.
inline std::vector<ScoredItem> recommend_top_n(std::span<const double> user,
                                               const FactorModel& items,
                                               std::span<const std::uint32_t> exclude,
                                               std::size_t n) {
  std::vector<bool> skip(items.n_items(), false);
  for (auto j : exclude)
    if (j < skip.size()) skip[j] = true;
  std::vector<ScoredItem> scored;
  scored.reserve(items.n_items());
  for (std::uint32_t j = 0; j < items.n_items(); ++j) {
    if (skip[j]) continue;
    auto v = items.item(j);
    double s = 0;
    for (std::size_t d = 0; d < items.k(); ++d) s += user[d] * v[d];
    scored.push_back({j, s});
  }
  auto better = [](const ScoredItem& a, const ScoredItem& b) {
    return a.score != b.score ? a.score > b.score : a.item < b.item;
  };
  n = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    better);
  scored.resize(n);
  return scored;
}

struct UserSplit {
  RatingDataset train;
  std::vector<RatingTriple> test;
};

// Holds out round(fraction * m_i) ratings of every user with at least two.
inline UserSplit split_per_user(const RatingDataset& ds, double test_fraction, std::uint64_t seed) {
  auto rng = make_engine(seed, "split");
  std::vector<RatingTriple> train, test;
  for (std::size_t u = 0; u < ds.n_users(); ++u) {
    auto r = ds.user_ratings(u);
    std::vector<RatingTriple> mine(r.begin(), r.end());
    std::shuffle(mine.begin(), mine.end(), rng);
    std::size_t held = mine.size() >= 2
                           ? static_cast<std::size_t>(std::llround(test_fraction * mine.size()))
                           : 0;
    held = std::min(held, mine.size() - (mine.empty() ? 0 : 1));
    test.insert(test.end(), mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(held));
    train.insert(train.end(), mine.begin() + static_cast<std::ptrdiff_t>(held), mine.end());
  }
  return {RatingDataset::from_triples(ds.n_users(), ds.n_items(), std::move(train), ds.range(),
                                      ds.user_ids(), ds.item_ids()),
          std::move(test)};
}

// Fits every user locally on `train` against the released item factors and
// scores `test`. Item ids of both must index rows of `items`.
inline double evaluate_local(const FactorModel& items, const RatingDataset& train,
                             std::span<const RatingTriple> test, double lambda,
                             std::optional<RatingRange> clip = std::nullopt) {
  if (test.empty()) return 0.0;
  std::unordered_map<std::uint32_t, std::vector<double>> fitted;
  double sq = 0;
  for (const auto& t : test) {
    auto it = fitted.find(t.user);
    if (it == fitted.end()) {
      auto own = t.user < train.n_users() ? train.user_ratings(t.user)
                                          : std::span<const RatingTriple>{};
      it = fitted.emplace(t.user, local_fit(items, own, lambda)).first;
    }
    auto v = items.item(t.item);
    double p = 0;
    for (std::size_t d = 0; d < items.k(); ++d) p += it->second[d] * v[d];
    if (clip) p = std::clamp(p, clip->min, clip->max);
    sq += (t.rating - p) * (t.rating - p);
  }
  return std::sqrt(sq / static_cast<double>(test.size()));
}

// Source id -> row of a released item matrix.
inline std::unordered_map<std::int64_t, std::uint32_t> invert_ids(
    const std::vector<std::int64_t>& ids) {
  std::unordered_map<std::int64_t, std::uint32_t> m;
  m.reserve(ids.size());
  for (std::uint32_t r = 0; r < ids.size(); ++r) m.emplace(ids[r], r);
  return m;
}

}  // namespace dpmf

#endif  // DPMF_RECOMMEND_HPP_
