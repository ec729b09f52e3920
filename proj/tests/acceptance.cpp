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
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "dpmf/dpmf.hpp"
#include "oracles.hpp"

namespace dpmf {
namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- shared synthetic problem ----

const LowRankProblem& problem() {
  static const LowRankProblem p = make_low_rank(200, 300, 5, 0.2, 0.1, 7);
  return p;
}

SgdConfig sgd_config() {
  SgdConfig cfg;
  cfg.eta0 = 0.04;
  cfg.gamma = 0.0;
  cfg.lambda = 0.005;
  cfg.epochs = 50;
  return cfg;
}

double sgd_rmse(std::size_t workers, std::size_t users_per_block, std::uint64_t seed = 1) {
  const auto& p = problem();
  InMemoryBlocks src(p.train, users_per_block);
  auto m = init_model(p.train.n_users(), p.train.n_items(), 8, 0.1, seed);
  auto cfg = sgd_config();
  cfg.workers = workers;
  train(m, src, cfg);
  return rmse(m, p.validation);
}

DpmfParams dp_params(double epsilon, std::uint64_t seed, std::size_t table_size) {
  DpmfParams d;
  d.epsilon = epsilon;
  d.kappa = 1.0;
  d.tau = 100;
  d.rho = 1.0;
  d.k = 8;
  d.init_scale = 0.1;
  d.seed = seed;
  d.sgld.eta0 = 5e-6;
  d.sgld.gamma = 0.0;
  d.sgld.zeta = 0.01;
  d.sgld.lambda = 0.005;
  d.sgld.epochs = 100;
  d.sgld.table_size = table_size;
  return d;
}

double dp_rmse(double epsilon, std::uint64_t seed, std::size_t table_size = 100000) {
  const auto& p = problem();
  auto r = run_dpmf(p.train, dp_params(epsilon, seed, table_size), p.validation);
  return r.trace.back().rmse;
}

double synthetic_bound() {
  const auto& p = problem();
  auto t = trim(p.train, 100, 0);
  return compute_budget(t, 100, 1.0, 1.0, compute_weights(t, 100, 1.0)).bound;
}

// ---- criteria ----

Outcome budget_math() {
  std::vector<RatingTriple> ts;
  for (std::uint32_t j = 0; j < 150; ++j) ts.push_back({0, j, 3.0f});
  for (std::uint32_t j = 0; j < 10; ++j) ts.push_back({1, j, 5.0f});
  auto raw = RatingDataset::from_triples(2, 150, ts, {1, 5});
  auto trimmed = trim(raw, 100, 1);
  double b1 = compute_budget(trimmed, 100, 1.0, 1.0, compute_weights(trimmed, 100, 1.0)).bound;
  double b2 = worst_case_bound(200, 1.0, {0, 5}, BoundFactor::kFiveStarSpan);
  double b2_span = worst_case_bound(200, 1.0, {0, 5}, BoundFactor::kRatingSpan);
  return {b1 == 2500.0 && b2 == 5000.0,
          fmt("B=%.0f (tau 100, [1,5]); B=%.0f (tau 200, [0,5], five-star span; "
              "(r_max-r_min+kappa)^2 would give %.0f)", b1, b2, b2_span)};
}

Outcome personalized_accounting() {
  double worst = 0;
  bool bounded = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    auto ds = make_power_law(20 + rng() % 80, 10 + rng() % 50, 200 + rng() % 800, 0.7, seed, 1.0);
    const std::size_t tau = 1 + rng() % 30;
    const double kappa = 0.5 + (rng() % 4) * 0.5;
    std::vector<double> w(ds.n_users());
    for (double& x : w) x = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    auto b = compute_budget(ds, tau, kappa, 1.0, w);
    // independent B_i, B
    const double reach = ds.range().span() + kappa;
    std::vector<double> bi(ds.n_users());
    double big_b = 0;
    for (std::size_t u = 0; u < bi.size(); ++u) {
      bi[u] = static_cast<double>(std::min<std::size_t>(tau, ds.user_count(u))) * w[u] * reach * reach;
      big_b = std::max(big_b, bi[u]);
    }
    const double eps = std::uniform_real_distribution<double>(0.01, 10.0)(rng);
    auto r = accounting(b, eps);
    auto r4 = accounting(b, 4 * big_b);
    for (std::size_t u = 0; u < bi.size(); ++u) {
      bounded = bounded && b.user_bounds[u] <= b.bound;
      worst = std::max(worst, std::abs(r.user_epsilons[u] - eps * bi[u] / (2 * big_b)));
      worst = std::max(worst, std::abs(r4.user_epsilons[u] - 2 * bi[u]) / std::max(1.0, 2 * bi[u]));
    }
  }
  return {bounded && worst <= 1e-12, fmt("50 random weight vectors, max deviation %.2e", worst)};
}

Outcome exp_mechanism() {
  double worst_slack = -1e300;
  std::size_t instances = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    TinyProblem prob;
    prob.n_users = 1 + rng() % 2;
    prob.n_items = 1 + rng() % 2;
    prob.kappa = 0.5 + (rng() % 3) * 0.5;
    prob.lambda = (rng() % 3) * 0.05;
    const std::size_t params = prob.n_users + prob.n_items;
    const std::size_t g = params == 2 ? 101 : params == 3 ? 46 : 17;
    for (std::size_t i = 0; i < g; ++i) prob.grid.push_back(-3.0 + 6.0 * i / (g - 1));
    std::uniform_int_distribution<int> stars(1, 5);
    std::vector<RatingTriple> full;
    for (std::uint32_t u = 0; u < prob.n_users; ++u)
      for (std::uint32_t j = 0; j < prob.n_items; ++j)
        if (rng() % 4 != 0 || (j == 0 && u == 0)) full.push_back({u, j, static_cast<float>(stars(rng))});
    // neighbor: remove every rating of one user
    const std::uint32_t gone = static_cast<std::uint32_t>(rng() % prob.n_users);
    std::vector<RatingTriple> less;
    for (const auto& t : full)
      if (t.user != gone) less.push_back(t);
    auto a = RatingDataset::from_triples(prob.n_users, prob.n_items, full, prob.range);
    auto b = RatingDataset::from_triples(prob.n_users, prob.n_items, less, prob.range);
    const std::size_t tau = 1 + rng() % 2;
    const double rho = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
    a = trim(a, tau, seed);
    b = trim(b, tau, seed);
    auto wa = compute_weights(a, tau, rho), wb = compute_weights(b, tau, rho);
    const double bound = worst_case_bound(tau, prob.kappa, prob.range);
    const double eps = std::array{0.1, 0.5, 1.0, 3.0}[rng() % 4];
    // alternate add and remove
    auto r = seed % 2 == 0 ? exp_mechanism_oracle(prob, a, wa, b, wb, eps, bound)
                           : exp_mechanism_oracle(prob, b, wb, a, wa, eps, bound);
    if (r.support == 0) continue;
    ++instances;
    worst_slack = std::max(worst_slack, r.max_log_ratio - eps);
  }
  return {instances >= 20 && worst_slack <= 1e-9,
          fmt("%zu instances, max(log ratio - eps) = %.4f", instances, worst_slack)};
}

struct StubFactory {
  std::uint64_t seed;
  testing::ScheduledNoise operator()(std::size_t, const NoiseLedger& ledger) const {
    return testing::ScheduledNoise(ledger, seed);
  }
};

SgldConfig lazy_config(std::size_t epochs) {
  SgldConfig cfg;
  cfg.eta0 = 1e-3;
  cfg.gamma = 0.6;
  cfg.zeta = 0.5;
  cfg.epochs = epochs;
  cfg.tiered_schedule = false;
  cfg.lambda_r = 1.0;
  cfg.lambda = 0.1;
  cfg.table_size = 0;
  return cfg;
}

Outcome lazy_noise() {
  auto ds = testing::random_dataset(10, 10, 40, 3);
  const std::size_t epochs = (100 + ds.size() - 1) / ds.size();
  const std::size_t steps = epochs * ds.size();
  InMemoryBlocks src(ds, 3);
  std::vector<double> w(10);
  for (std::size_t i = 0; i < 10; ++i) w[i] = 0.5 + 0.1 * i;
  const double scale = 0.3;
  const std::size_t k = 2;
  auto cfg = lazy_config(epochs);
  std::vector<double> etas;
  for (std::size_t e = 1; e <= epochs; ++e) etas.push_back(learning_rate(cfg.eta0, cfg.gamma, e));
  std::vector<double> lam(k, scale * cfg.lambda);
  const auto start = init_model(10, 10, k, 0.3, 5);

  bool exact = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto lazy = start, eager = start;
    sample_with(lazy, src, scale, w, cfg, StubFactory{seed});
    NoiseLedger ledger(10, 10);
    testing::ScheduledNoise stub(ledger, seed);
    testing::eager_sgld(eager, ds, w, scale * cfg.lambda_r, lam, lam, etas, cfg.zeta, ledger,
                        [&](std::span<double> row, RowRef ref, std::uint64_t step) {
                          stub.inject(row, ref, step - 1, step);
                        });
    exact = exact && lazy == eager;
  }

  // real noise: per-coordinate mean and variance over 1000 runs each
  const std::size_t runs = 1000, dim = 2 * 10 * k;
  auto flat = [](const FactorModel& m) {
    std::vector<double> v(m.user_matrix());
    v.insert(v.end(), m.item_matrix().begin(), m.item_matrix().end());
    return v;
  };
  std::vector<std::vector<double>> lazy_x(dim), eager_x(dim);
  std::mt19937_64 eager_rng(77);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t run = 0; run < runs; ++run) {
    auto lazy = start, eager = start;
    auto c = cfg;
    c.seed = run;
    sample_with(lazy, src, scale, w, c, DefaultNoise(c));
    NoiseLedger ledger(10, 10);
    testing::eager_sgld(eager, ds, w, scale * cfg.lambda_r, lam, lam, etas, cfg.zeta, ledger,
                        [&](std::span<double> row, RowRef, std::uint64_t step) {
                          double sd = std::sqrt(ledger.variance(step - 1, step));
                          for (double& x : row) x += sd * z(eager_rng);
                        });
    auto a = flat(lazy), b = flat(eager);
    for (std::size_t d = 0; d < dim; ++d) {
      lazy_x[d].push_back(a[d]);
      eager_x[d].push_back(b[d]);
    }
  }
  auto moments = [](const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= n;
    double m2 = 0, m4 = 0;
    for (double x : xs) {
      double d2 = (x - mean) * (x - mean);
      m2 += d2;
      m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    return std::array{mean, m2, std::sqrt(m2 / n), std::sqrt(std::max(0.0, m4 - m2 * m2) / n)};
  };
  double worst_mean = 0, worst_var = 0;
  for (std::size_t d = 0; d < dim; ++d) {
    auto l = moments(lazy_x[d]), e = moments(eager_x[d]);
    worst_mean = std::max(worst_mean, std::abs(l[0] - e[0]) / std::hypot(l[2], e[2]));
    worst_var = std::max(worst_var, std::abs(l[1] - e[1]) / std::hypot(l[3], e[3]));
  }
  return {exact && worst_mean <= 5 && worst_var <= 5,
          fmt("stub noise %s over %zu steps; real noise worst |mean gap| %.2f SE, |variance gap| %.2f SE",
              exact ? "bit-identical" : "DIFFERS", steps, worst_mean, worst_var)};
}

Outcome gradient_unbiased() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::mt19937_64 rng(seed + 500);
    auto ds = testing::random_dataset(2 + rng() % 9, 2 + rng() % 9, rng() % 70, seed);
    if (ds.size() > 100) continue;
    const std::size_t k = 1 + rng() % 4;
    auto m = init_model(ds.n_users(), ds.n_items(), k, 1.0, seed);
    std::vector<double> w(ds.n_users());
    for (double& x : w) x = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    auto hp = HyperParams::uniform(k, 0.1 + (rng() % 10) * 0.1, 0.05 * (rng() % 5));
    for (auto& x : hp.lambda_v) x *= 1 + std::uniform_real_distribution<double>(0, 1)(rng);
    auto meta = describe(ds);
    auto ctx = make_context(hp, w, meta);
    std::vector<std::vector<double>> au(ds.n_users(), std::vector<double>(k)), av(ds.n_items(), std::vector<double>(k));
    std::vector<double> gu(k), gv(k);
    const double n = static_cast<double>(ds.size());
    for (const auto& t : ds.triples()) {
      scaled_gradient(m, t, ctx, gu, gv);
      for (std::size_t d = 0; d < k; ++d) {
        au[t.user][d] += gu[d] / n;
        av[t.item][d] += gv[d] / n;
      }
    }
    std::vector<RatingTriple> ts(ds.triples().begin(), ds.triples().end());
    auto [eu, ev] = testing::full_gradient(m, ts, w, hp.lambda_r, hp.lambda_u, hp.lambda_v);
    for (std::size_t i = 0; i < au.size(); ++i)
      for (std::size_t d = 0; d < k; ++d) worst = std::max(worst, std::abs(au[i][d] - eu[i][d]));
    for (std::size_t j = 0; j < av.size(); ++j)
      for (std::size_t d = 0; d < k; ++d) worst = std::max(worst, std::abs(av[j][d] - ev[j][d]));
  }
  return {worst <= 1e-10, fmt("40 datasets with <= 100 ratings, max |error| %.2e", worst)};
}

Outcome gaussian_table() {
  auto table = std::make_shared<const GaussianTable>(10000, 3);
  TableNormals normals(table, 4, 64);
  const std::size_t n = 1000000;
  std::vector<double> xs(n);
  normals.fill(xs);
  const double ks = testing::ks_statistic(xs), crit = testing::ks_critical_001(n);

  const double eps = 4 * synthetic_bound();
  const std::size_t seeds = 8;
  auto mean_rmse = [&](std::size_t size) {
    double s = 0;
    for (std::uint64_t seed = 0; seed < seeds; ++seed) s += dp_rmse(eps, seed, size);
    return s / seeds;
  };
  const double truth = mean_rmse(0);
  bool ok = ks < crit;
  std::string sizes;
  for (std::size_t size : {1000u, 10000u, 100000u}) {
    const double rel = std::abs(mean_rmse(size) - truth) / truth;
    if (size >= 10000) ok = ok && rel < 0.02;
    sizes += fmt(" %zu:%.2f%%", size, 100 * rel);
  }
  return {ok, fmt("KS %.5f < %.5f; mean RMSE over %zu seeds, true RNG %.4f, gap by size%s", ks, crit,
                  seeds, truth, sizes.c_str())};
}

// Alternating ridge fits, an independent check that the threshold is reachable.
double als_rmse(double lambda, std::size_t sweeps) {
  const auto& p = problem();
  const std::size_t k = 8;
  auto m = init_model(p.train.n_users(), p.train.n_items(), k, 0.1, 1);
  std::vector<std::vector<RatingTriple>> by_item(p.train.n_items());
  for (const auto& t : p.train.triples()) by_item[t.item].push_back(t);
  auto fit = [&](std::span<double> row, const std::vector<RatingTriple>& rs, bool user_side) {
    if (rs.empty()) return;
    std::vector<std::vector<double>> vs;
    std::vector<double> ys;
    for (const auto& t : rs) {
      auto other = user_side ? m.item(t.item) : m.user(t.user);
      vs.emplace_back(other.begin(), other.end());
      ys.push_back(t.rating);
    }
    auto u = testing::normal_equation_fit(vs, ys, lambda);
    std::copy(u.begin(), u.end(), row.begin());
  };
  for (std::size_t s = 0; s < sweeps; ++s) {
    for (std::uint32_t i = 0; i < p.train.n_users(); ++i) {
      auto r = p.train.user_ratings(i);
      fit(m.user(i), std::vector<RatingTriple>(r.begin(), r.end()), true);
    }
    for (std::uint32_t j = 0; j < p.train.n_items(); ++j) fit(m.item(j), by_item[j], false);
  }
  return rmse(m, p.validation);
}

Outcome convergence() {
  double als = 1e300;
  for (double lambda : {0.3, 1.0, 3.0}) als = std::min(als, als_rmse(lambda, 15));
  const auto& p = problem();
  InMemoryBlocks src(p.train, 1000);
  auto m = init_model(p.train.n_users(), p.train.n_items(), 8, 0.1, 1);
  auto log = train(m, src, sgd_config(), {}, p.validation);
  double best_epoch = 0;
  for (const auto& e : log.epochs)
    if (e.rmse <= 0.15) {
      best_epoch = static_cast<double>(e.epoch);
      break;
    }
  const double final_rmse = log.epochs.back().rmse;
  return {final_rmse <= 0.15 && als <= 0.15,
          fmt("SGD validation RMSE %.4f after 50 epochs (first <= 0.15 at epoch %.0f); ALS oracle %.4f",
              final_rmse, best_epoch, als)};
}

Outcome privacy_utility() {
  const double b = synthetic_bound();
  const double sgd = sgd_rmse(1, 1000);
  std::array<double, 3> eps{b / 10, b, 4 * b};
  std::array<double, 3> med{};
  for (std::size_t e = 0; e < eps.size(); ++e) {
    std::vector<double> runs;
    for (std::uint64_t seed = 0; seed < 3; ++seed) runs.push_back(dp_rmse(eps[e], seed));
    med[e] = median(runs);
  }
  const double rel = (med[2] - sgd) / sgd;
  const bool monotone = med[0] >= med[1] && med[1] >= med[2];
  return {rel <= 0.25 && monotone,
          fmt("B=%.0f; SGD %.4f; SGLD median RMSE at B/10 %.4f, B %.4f, 4B %.4f (%.1f%% above SGD)",
              b, sgd, med[0], med[1], med[2], 100 * rel)};
}

Outcome local_recommender() {
  FactorModel hand(0, 1, 2);
  hand.item(0)[0] = 1.0;
  std::vector<RatingTriple> one{{0, 0, 4.0f}};
  auto u = local_fit(hand, one, 1.0);
  const bool exact = u == std::vector<double>{2.0, 0.0};
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t k = 1 + rng() % 10, n_items = 5 + rng() % 40, count = 1 + rng() % 30;
    FactorModel items(0, n_items, k);
    std::normal_distribution<double> z(0.0, 1.0);
    for (double& x : items.item_matrix()) x = z(rng);
    std::vector<RatingTriple> ts;
    std::vector<std::vector<double>> vs;
    std::vector<double> rs;
    for (std::size_t c = 0; c < count; ++c) {
      std::uint32_t j = static_cast<std::uint32_t>(rng() % n_items);
      float r = static_cast<float>(1 + rng() % 5);
      ts.push_back({0, j, r});
      auto v = items.item(j);
      vs.emplace_back(v.begin(), v.end());
      rs.push_back(r);
    }
    const double lambda = std::uniform_real_distribution<double>(0.01, 2.0)(rng);
    auto got = local_fit(items, ts, lambda);
    auto ref = testing::normal_equation_fit(vs, rs, lambda);
    for (std::size_t d = 0; d < k; ++d) worst = std::max(worst, std::abs(got[d] - ref[d]));
  }
  return {exact && worst <= 1e-8, fmt("hand case u=[%g,%g]; 100 instances, max |error| %.2e", u[0],
                                      u[1], worst)};
}

Outcome pipeline_integrity() {
  const auto& p = problem();
  // every rating touched exactly once per pass, read back from disk
  const auto dir = std::filesystem::temp_directory_path() / ("dpmf_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  auto plan = plan_tiers(p.train, clamp_cutoffs({50, 150}, p.train.n_items()));
  write_blocks(p.train, plan, 17, dir / "train");
  BlockFile file(dir / "train");
  std::vector<std::atomic<int>> touched(p.train.n_users() * p.train.n_items());
  auto stats = run_pass(file, 8, [&](const UserBlock& b, std::size_t) {
    for (const auto& t : b.triples) ++touched[t.user * p.train.n_items() + t.item];
  });
  std::size_t once = 0, other = 0;
  for (auto& c : touched) {
    int v = c.load();
    once += v == 1;
    other += v > 1;
  }
  const bool pass_ok = once == p.train.size() && other == 0 && stats.ratings == p.train.size();
  auto back = load_dataset(file);
  std::vector<RatingTriple> mapped(back.triples().begin(), back.triples().end());
  for (auto& t : mapped) t.item = plan.order[t.item];
  const bool round_trip = testing::multiset(mapped) == testing::multiset(p.train.triples());
  std::filesystem::remove_all(dir);

  auto run_once = [&] {
    InMemoryBlocks src(p.train, 25);
    auto m = init_model(p.train.n_users(), p.train.n_items(), 8, 0.1, 3);
    auto cfg = sgd_config();
    cfg.epochs = 5;
    train(m, src, cfg);
    return encode_snapshot(m, true, {});
  };
  const bool reproducible = run_once() == run_once();
  const double r1 = sgd_rmse(1, 25), r8 = sgd_rmse(8, 25);
  const double rel = std::abs(r8 - r1) / r1;
  return {pass_ok && round_trip && reproducible && rel < 0.02,
          fmt("pass touched %zu/%zu once; round trip %s; single-worker bytes %s; RMSE 1 worker %.4f, "
              "8 workers %.4f (%.2f%%)",
              once, p.train.size(), round_trip ? "exact" : "DIFFERS",
              reproducible ? "identical" : "DIFFER", r1, r8, 100 * rel)};
}

}  // namespace
}  // namespace dpmf

int main() {
  using namespace dpmf;
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"budget math", budget_math},
      {"personalized accounting", personalized_accounting},
      {"exponential-mechanism oracle", exp_mechanism},
      {"lazy-noise correctness", lazy_noise},
      {"gradient unbiasedness", gradient_unbiased},
      {"gaussian table", gaussian_table},
      {"convergence (non-private)", convergence},
      {"privacy-utility sanity", privacy_utility},
      {"local recommender", local_recommender},
      {"pipeline integrity", pipeline_integrity},
  };
  int failed = 0, index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << name << ": " << o.detail
              << " (" << fmt("%.1f", secs) << " s)" << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << 10 - failed << "/10" << std::endl;
  return failed ? 1 : 0;
}
