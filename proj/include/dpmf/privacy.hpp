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
#ifndef DPMF_PRIVACY_HPP_
#define DPMF_PRIVACY_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpmf/block_io.hpp"
#include "dpmf/dataset.hpp"
#include "dpmf/model.hpp"
#include "dpmf/preprocess.hpp"
#include "dpmf/sgld_solver.hpp"

namespace dpmf {

struct PrivacyReport {
  double epsilon = 0;
  double bound = 0;  // B
  double kappa = 0;
  std::size_t tau = 0;
  double epsilon_rating = 0;          // eps / tau
  std::vector<double> user_epsilons;  // eps * B_i / (2B)
  std::size_t retries = 0;
  std::string constraint_scope;
  std::string caveat =
      "epsilon holds for an exact sample; an approximate sample delta-away in L1 gives "
      "(epsilon, (1 + e^epsilon) delta), and delta is not measured";
};

inline PrivacyReport accounting(const PrivacyBudget& budget, double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  PrivacyReport r;
  r.epsilon = epsilon;
  r.bound = budget.bound;
  r.kappa = budget.kappa;
  r.tau = budget.tau;
  r.epsilon_rating = epsilon / static_cast<double>(budget.tau);
  r.user_epsilons.resize(budget.user_bounds.size());
  for (std::size_t u = 0; u < r.user_epsilons.size(); ++u)
    r.user_epsilons[u] = epsilon * budget.user_bounds[u] / (2.0 * budget.bound);
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), mid));
}

inline nlohmann::json report_json(const PrivacyReport& r,
                                  const std::vector<std::int64_t>& user_ids = {}) {
  nlohmann::json users = nlohmann::json::array();
  for (std::size_t u = 0; u < r.user_epsilons.size(); ++u)
    users.push_back({{"user", user_ids.empty() ? static_cast<std::int64_t>(u) : user_ids[u]},
                     {"epsilon_i", r.user_epsilons[u]}});
  double max_eps = r.user_epsilons.empty()
                       ? 0
                       : *std::max_element(r.user_epsilons.begin(), r.user_epsilons.end());
  return {{"epsilon", r.epsilon},
          {"B", r.bound},
          {"kappa", r.kappa},
          {"tau", r.tau},
          {"epsilon_rating", r.epsilon_rating},
          {"epsilon_i_median", median(r.user_epsilons)},
          {"epsilon_i_max", max_eps},
          {"retries", r.retries},
          {"constraint_scope", r.constraint_scope},
          {"caveat", r.caveat},
          {"users", users}};
}

template <typename T>
struct Accepted {
  T value;
  std::size_t attempts;
};

// Draws until `accept` holds. Conditioning by rejection leaves the relative
// probabilities inside the accepted set untouched.
template <typename Draw, typename Accept>
auto retry_until(Draw&& draw, Accept&& accept, std::size_t limit)
    -> Accepted<decltype(draw(std::size_t{0}))> {
  for (std::size_t attempt = 0; attempt < limit; ++attempt) {
    auto value = draw(attempt);
    if (accept(value)) return {std::move(value), attempt + 1};
  }
  throw RetryLimitError("no acceptable sample after " + std::to_string(limit) + " attempts");
}

enum class ConstraintScope { kObservedPlusSampled, kExhaustive };

struct ConstraintCheck {
  ConstraintScope scope = ConstraintScope::kObservedPlusSampled;
  std::size_t sampled_pairs = 1'000'000;

  std::string describe() const {
    return scope == ConstraintScope::kExhaustive
               ? "all user-item pairs"
               : "observed pairs plus " + std::to_string(sampled_pairs) +
                     " uniformly sampled pairs (not every pair)";
  }
};

struct Violation {
  std::uint32_t user;
  std::uint32_t item;
  double prediction;
};

// First pair whose <u_i, v_j> leaves [r_min - kappa, r_max + kappa].
inline std::optional<Violation> find_violation(const FactorModel& m,
                                               std::span<const RatingTriple> observed,
                                               const RatingRange& range, double kappa,
                                               const ConstraintCheck& check, Engine& rng) {
  const double lo = range.min - kappa, hi = range.max + kappa;
  auto test = [&](std::uint32_t i, std::uint32_t j) -> std::optional<Violation> {
    double p = m.predict_unchecked(i, j);
    if (!(p >= lo && p <= hi)) return Violation{i, j, p};
    return std::nullopt;
  };
  if (check.scope == ConstraintScope::kExhaustive) {
    for (std::uint32_t i = 0; i < m.n_users(); ++i)
      for (std::uint32_t j = 0; j < m.n_items(); ++j)
        if (auto v = test(i, j)) return v;
    return std::nullopt;
  }
  for (const auto& t : observed)
    if (auto v = test(t.user, t.item)) return v;
  if (m.n_users() == 0 || m.n_items() == 0) return std::nullopt;
  std::uniform_int_distribution<std::uint32_t> pick_user(0, static_cast<std::uint32_t>(m.n_users() - 1));
  std::uniform_int_distribution<std::uint32_t> pick_item(0, static_cast<std::uint32_t>(m.n_items() - 1));
  for (std::size_t s = 0; s < check.sampled_pairs; ++s)
    if (auto v = test(pick_user(rng), pick_item(rng))) return v;
  return std::nullopt;
}

struct DpmfParams {
  double epsilon = 1.0;
  double kappa = 1.0;
  std::size_t tau = 100;
  double rho = 1.0;
  BoundFactor factor = BoundFactor::kRatingSpan;
  bool worst_case_bound = false;  // B = tau * factor instead of max_i B_i
  std::size_t k = 16;
  double init_scale = 0.01;
  std::uint64_t seed = 0;
  std::size_t retry_limit = 10;
  std::size_t users_per_block = 1000;
  std::vector<std::uint32_t> tier_cutoffs = {500, 4500};
  ConstraintCheck constraint;
  SgldConfig sgld;
};

struct DpmfResult {
  FactorModel sample;         // full (U, V), items in tier-plan order
  FactorModel released;       // V only (zero users)
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;  // released row -> source item id
  TierPlan plan;
  PrivacyBudget budget;
  PrivacyReport report;
  std::vector<TraceRecord> trace;  // of the accepted attempt
};

inline FactorModel release_items(const FactorModel& m) {
  FactorModel v(0, m.n_items(), m.k());
  v.item_matrix() = m.item_matrix();
  return v;
}

// trim -> weights -> budget -> tiered blocks -> sample, resampling while any
// checked prediction leaves [r_min - kappa, r_max + kappa]. `validation`
// uses the dense ids of `raw`.
inline DpmfResult run_dpmf(const RatingDataset& raw, const DpmfParams& p,
                           std::span<const RatingTriple> validation = {}) {
  if (!(p.epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  RatingDataset trimmed = trim(raw, p.tau, p.seed);
  auto weights = compute_weights(trimmed, p.tau, p.rho);
  double override_bound =
      p.worst_case_bound ? worst_case_bound(p.tau, p.kappa, raw.range(), p.factor) : 0.0;
  PrivacyBudget budget =
      compute_budget(trimmed, p.tau, p.kappa, p.epsilon, weights, p.factor, p.rho, override_bound);

  TierPlan plan = plan_tiers(trimmed, clamp_cutoffs(p.tier_cutoffs, trimmed.n_items()));
  RatingDataset planned = apply_plan(trimmed, plan);
  InMemoryBlocks blocks(planned, p.users_per_block, plan.cutoffs);
  std::vector<RatingTriple> planned_validation(validation.begin(), validation.end());
  for (auto& t : planned_validation) t.item = plan.rank[t.item];

  struct Attempt {
    FactorModel model;
    std::vector<TraceRecord> trace;
  };
  auto draw = [&](std::size_t attempt) {
    Attempt a{init_model(planned.n_users(), planned.n_items(), p.k, p.init_scale,
                         derive_seed(p.seed, "attempt", attempt)),
              {}};
    SgldConfig cfg = p.sgld;
    cfg.seed = derive_seed(p.seed, "sgld", attempt);
    a.trace = sample(a.model, blocks, budget, cfg, planned_validation).trace;
    return a;
  };
  auto accept = [&](const Attempt& a) {
    auto rng = make_engine(p.seed, "constraint");
    return !find_violation(a.model, planned.triples(), planned.range(), p.kappa, p.constraint, rng);
  };
  Accepted<Attempt> accepted = [&] {
    try {
      return retry_until(draw, accept, p.retry_limit);
    } catch (const RetryLimitError&) {
      throw RetryLimitError("predictions left [r_min - kappa, r_max + kappa] in all " +
                            std::to_string(p.retry_limit) +
                            " attempts; increase kappa (currently " + std::to_string(p.kappa) + ")");
    }
  }();

  DpmfResult r;
  r.released = release_items(accepted.value.model);
  r.sample = std::move(accepted.value.model);
  r.trace = std::move(accepted.value.trace);
  r.user_ids = planned.user_ids();
  r.item_ids = planned.item_ids();
  r.plan = std::move(plan);
  r.report = accounting(budget, p.epsilon);
  r.report.retries = accepted.attempts - 1;
  r.report.constraint_scope = p.constraint.describe();
  r.budget = std::move(budget);
  return r;
}

// Exhaustive check of the exponential mechanism on a tiny model with scalar
// factors (k = 1). Every user and item factor ranges over `grid`; points
// whose predictions leave [r_min - kappa, r_max + kappa] for some pair are
// outside the support (the retry loop removes them).
struct TinyProblem {
  std::size_t n_users = 1;
  std::size_t n_items = 1;
  std::vector<double> grid;
  RatingRange range;
  double kappa = 1.0;
  double lambda = 0.0;
};

struct OracleResult {
  double max_log_ratio = 0;   // max over support of |log P(theta) - log P'(theta)|
  double max_energy_gap = 0;  // max over support of scale * |F(theta) - F'(theta)|
  std::size_t support = 0;
  std::size_t grid_points = 0;
};

// P(theta) ∝ exp(-(eps / 4B) F(theta)) for both datasets (ids within the
// problem's dimensions; weights per user, zero-rating users contribute
// nothing).
inline OracleResult exp_mechanism_oracle(const TinyProblem& problem, const RatingDataset& data,
                                         std::span<const double> weights,
                                         const RatingDataset& neighbor,
                                         std::span<const double> neighbor_weights,
                                         double epsilon, double bound) {
  const std::size_t n_params = problem.n_users + problem.n_items;
  const std::size_t g = problem.grid.size();
  if (g == 0) throw std::invalid_argument("empty grid");
  double total = std::pow(static_cast<double>(g), static_cast<double>(n_params));
  if (total > 1e5) throw std::invalid_argument("grid too large for exact normalisation");
  const std::size_t points = static_cast<std::size_t>(std::llround(total));
  const double scale = epsilon / (4.0 * bound);
  const double lo = problem.range.min - problem.kappa, hi = problem.range.max + problem.kappa;

  std::vector<double> theta(n_params);
  std::vector<double> log_p, log_q;
  std::vector<double> gap;
  auto energy = [&](const RatingDataset& ds, std::span<const double> w) {
    double f = 0;
    for (const auto& t : ds.triples()) {
      double e = t.rating - theta[t.user] * theta[problem.n_users + t.item];
      f += w[t.user] * e * e;
    }
    double reg = 0;
    for (double x : theta) reg += x * x;
    return f + problem.lambda * reg;
  };
  for (std::size_t idx = 0; idx < points; ++idx) {
    std::size_t rest = idx;
    for (std::size_t p = 0; p < n_params; ++p) {
      theta[p] = problem.grid[rest % g];
      rest /= g;
    }
    bool inside = true;
    for (std::size_t i = 0; i < problem.n_users && inside; ++i)
      for (std::size_t j = 0; j < problem.n_items && inside; ++j) {
        double pred = theta[i] * theta[problem.n_users + j];
        inside = pred >= lo && pred <= hi;
      }
    if (!inside) continue;
    double fx = energy(data, weights), fy = energy(neighbor, neighbor_weights);
    log_p.push_back(-scale * fx);
    log_q.push_back(-scale * fy);
    gap.push_back(scale * std::abs(fx - fy));
  }
  OracleResult r;
  r.grid_points = points;
  r.support = log_p.size();
  if (log_p.empty()) return r;
  auto normalise = [](std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += std::exp(x - mx);
    double lse = mx + std::log(s);
    for (double& x : v) x -= lse;
  };
  normalise(log_p);
  normalise(log_q);
  for (std::size_t s = 0; s < log_p.size(); ++s) {
    r.max_log_ratio = std::max(r.max_log_ratio, std::abs(log_p[s] - log_q[s]));
    r.max_energy_gap = std::max(r.max_energy_gap, gap[s]);
  }
  return r;
}

}  // namespace dpmf

#endif  // DPMF_PRIVACY_HPP_
