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
#ifndef DPMF_PREPROCESS_HPP_
#define DPMF_PREPROCESS_HPP_

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpmf/dataset.hpp"
#include "dpmf/rng.hpp"

namespace dpmf {

// Caps every user at tau ratings, dropping a uniformly chosen subset of the
// excess. Users at or below the cap are untouched.
inline RatingDataset trim(const RatingDataset& ds, std::size_t tau, std::uint64_t seed) {
  if (tau < 1) throw std::invalid_argument("tau must be at least 1");
  auto rng = make_engine(seed, "trim");
  std::vector<RatingTriple> kept;
  kept.reserve(ds.size());
  for (std::size_t u = 0; u < ds.n_users(); ++u) {
    auto ratings = ds.user_ratings(u);
    if (ratings.size() <= tau) {
      kept.insert(kept.end(), ratings.begin(), ratings.end());
    } else {
      std::sample(ratings.begin(), ratings.end(), std::back_inserter(kept), tau, rng);
    }
  }
  return RatingDataset::from_triples(ds.n_users(), ds.n_items(), std::move(kept), ds.range(),
                                     ds.user_ids(), ds.item_ids());
}

// w_i = min(rho, tau / m_i); users without ratings get rho.
inline std::vector<double> compute_weights(const RatingDataset& ds, std::size_t tau, double rho) {
  if (rho < 0) throw std::invalid_argument("rho must be non-negative");
  std::vector<double> w(ds.n_users(), rho);
  for (std::size_t u = 0; u < w.size(); ++u) {
    auto m = ds.user_count(u);
    if (m > 0) w[u] = std::min(rho, static_cast<double>(tau) / static_cast<double>(m));
  }
  return w;
}

// How the squared residual of one rating is bounded.
enum class BoundFactor {
  kRatingSpan,      // (r_max - r_min + kappa)^2
  kFiveStarSpan,    // (5 - 1 + kappa)^2 regardless of the declared range
  kUpperMagnitude,  // (max|r| + kappa)^2, the conservative variant
};

inline double residual_bound(const RatingRange& range, double kappa, BoundFactor factor) {
  double reach = 0;
  switch (factor) {
    case BoundFactor::kRatingSpan: reach = range.span() + kappa; break;
    case BoundFactor::kFiveStarSpan: reach = 4.0 + kappa; break;
    case BoundFactor::kUpperMagnitude:
      reach = std::max(std::abs(range.max), std::abs(range.min)) + kappa;
      break;
  }
  return reach * reach;
}

inline std::string to_string(BoundFactor f) {
  switch (f) {
    case BoundFactor::kRatingSpan: return "rating-span";
    case BoundFactor::kFiveStarSpan: return "five-star-span";
    case BoundFactor::kUpperMagnitude: return "upper-magnitude";
  }
  return "?";
}

inline BoundFactor parse_bound_factor(const std::string& s) {
  if (s == "rating-span") return BoundFactor::kRatingSpan;
  if (s == "five-star-span") return BoundFactor::kFiveStarSpan;
  if (s == "upper-magnitude") return BoundFactor::kUpperMagnitude;
  throw std::invalid_argument("unknown bound factor '" + s + "'");
}

// Data-independent bound tau * factor. Dominates every B_i whenever weights
// come from compute_weights, since min(tau, m_i) * min(rho, tau/m_i) <= tau
// for rho <= 1 and for m_i > tau.
inline double worst_case_bound(std::size_t tau, double kappa, const RatingRange& range,
                               BoundFactor factor = BoundFactor::kRatingSpan) {
  return static_cast<double>(tau) * residual_bound(range, kappa, factor);
}

struct PrivacyBudget {
  double epsilon = 0;
  double kappa = 0;
  std::size_t tau = 0;
  double rho = 1;
  RatingRange range;
  BoundFactor factor = BoundFactor::kRatingSpan;
  double bound = 0;                      // B
  std::vector<std::uint32_t> counts;     // m_i after trimming
  std::vector<double> weights;           // w_i
  std::vector<double> user_bounds;       // B_i
  std::vector<double> user_epsilons;     // eps_i = eps * B_i / (2B)

  // Multiplier that turns F into the sampled energy, eps / (4B).
  double scale() const { return epsilon / (4.0 * bound); }
};

// B_i = min(tau, m_i) w_i factor, B = max_i B_i. When `bound_override` is
// positive it replaces the maximum (e.g. worst_case_bound) and must dominate
// every B_i.
inline PrivacyBudget compute_budget(const RatingDataset& ds, std::size_t tau, double kappa,
                                    double epsilon, std::vector<double> weights,
                                    BoundFactor factor = BoundFactor::kRatingSpan,
                                    double rho = 1.0, double bound_override = 0.0) {
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  if (!(kappa > 0)) throw std::invalid_argument("kappa must be positive");
  if (tau < 1) throw std::invalid_argument("tau must be at least 1");
  if (weights.size() != ds.n_users())
    throw std::invalid_argument("one weight per user required");
  PrivacyBudget b;
  b.epsilon = epsilon;
  b.kappa = kappa;
  b.tau = tau;
  b.rho = rho;
  b.range = ds.range();
  b.factor = factor;
  b.counts = ds.user_counts();
  b.weights = std::move(weights);
  const double per_rating = residual_bound(ds.range(), kappa, factor);
  b.user_bounds.resize(ds.n_users());
  for (std::size_t u = 0; u < ds.n_users(); ++u) {
    double m = std::min<double>(static_cast<double>(tau), b.counts[u]);
    b.user_bounds[u] = m * b.weights[u] * per_rating;
    b.bound = std::max(b.bound, b.user_bounds[u]);
  }
  if (bound_override > 0) {
    if (bound_override < b.bound)
      throw std::invalid_argument("bound override is smaller than some user's B_i");
    b.bound = bound_override;
  }
  if (!(b.bound > 0)) throw std::invalid_argument("bound B is zero: no weighted ratings");
  b.user_epsilons.resize(ds.n_users());
  for (std::size_t u = 0; u < ds.n_users(); ++u)
    b.user_epsilons[u] = epsilon * b.user_bounds[u] / (2.0 * b.bound);
  return b;
}

// One record per user plus the globals. Kept local: it reveals rating counts.
inline nlohmann::json budget_report(const PrivacyBudget& b,
                                    const std::vector<std::int64_t>& user_ids = {}) {
  nlohmann::json users = nlohmann::json::array();
  for (std::size_t u = 0; u < b.weights.size(); ++u) {
    users.push_back({{"user", user_ids.empty() ? static_cast<std::int64_t>(u) : user_ids[u]},
                     {"m", b.counts[u]},
                     {"w", b.weights[u]},
                     {"B_i", b.user_bounds[u]},
                     {"epsilon_i", b.user_epsilons[u]}});
  }
  return {{"epsilon", b.epsilon},
          {"kappa", b.kappa},
          {"tau", b.tau},
          {"rho", b.rho},
          {"rating_min", b.range.min},
          {"rating_max", b.range.max},
          {"bound_factor", to_string(b.factor)},
          {"B", b.bound},
          {"epsilon_rating", b.epsilon / static_cast<double>(b.tau)},
          {"users", users}};
}

// Inverse of budget_report for the fields training needs.
inline PrivacyBudget budget_from_report(const nlohmann::json& j) {
  PrivacyBudget b;
  b.epsilon = j.at("epsilon").get<double>();
  b.kappa = j.at("kappa").get<double>();
  b.tau = j.at("tau").get<std::size_t>();
  b.rho = j.at("rho").get<double>();
  b.range = {j.at("rating_min").get<double>(), j.at("rating_max").get<double>()};
  b.factor = parse_bound_factor(j.at("bound_factor").get<std::string>());
  b.bound = j.at("B").get<double>();
  for (const auto& u : j.at("users")) {
    b.counts.push_back(u.at("m").get<std::uint32_t>());
    b.weights.push_back(u.at("w").get<double>());
    b.user_bounds.push_back(u.at("B_i").get<double>());
    b.user_epsilons.push_back(u.at("epsilon_i").get<double>());
  }
  return b;
}

// Re-targets an existing budget at a different epsilon.
inline PrivacyBudget with_epsilon(PrivacyBudget b, double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  b.epsilon = epsilon;
  for (std::size_t u = 0; u < b.user_bounds.size(); ++u)
    b.user_epsilons[u] = epsilon * b.user_bounds[u] / (2.0 * b.bound);
  return b;
}

}  // namespace dpmf

#endif  // DPMF_PREPROCESS_HPP_
