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
#ifndef DPMF_SGLD_SOLVER_HPP_
#define DPMF_SGLD_SOLVER_HPP_

#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include "dpmf/block_io.hpp"
#include "dpmf/model.hpp"
#include "dpmf/noise.hpp"
#include "dpmf/pipeline.hpp"
#include "dpmf/preprocess.hpp"
#include "dpmf/sgd_solver.hpp"

namespace dpmf {

struct SgldConfig {
  double eta0 = 1e-6;
  double gamma = 0.6;
  double zeta = 1.0;  // noise temperature, variance zeta * eta_t
  std::size_t epochs = 10;
  std::size_t workers = 1;
  std::size_t table_size = 1u << 20;  // 0 draws from a true generator instead
  std::size_t segment_length = 64;
  double alpha = 1.0;
  double beta = 100.0;
  std::uint64_t seed = 0;
  bool fix_hyperparams = true;
  double lambda_r = 1.0;
  double lambda = 5e-3;              // prior precision when none is provided
  std::vector<double> lambda_u;      // provided diagonals, before scaling
  std::vector<double> lambda_v;
  bool tiered_schedule = true;
  bool prefetch = false;
  std::size_t prefetch_stride = 2;
  std::size_t snapshot_every = 0;
  std::filesystem::path snapshot_path;

  void validate() const {
    if (!(eta0 > 0)) throw std::invalid_argument("eta0 must be positive");
    if (gamma < 0) throw std::invalid_argument("gamma must be non-negative");
    if (!(zeta > 0 && zeta <= 1)) throw std::invalid_argument("zeta must lie in (0, 1]");
    if (workers < 1) throw std::invalid_argument("workers must be at least 1");
    if (!(alpha > 0 && beta > 0)) throw std::invalid_argument("alpha and beta must be positive");
  }
};

// The sampler targets exp(-scale * F(U, V)) with
//   F = sum w_i (r_ij - <u_i, v_j>)^2 + lambda (|U|^2 + |V|^2)
// and the update  x <- x - eta * g + N(0, zeta * eta).  With zeta = 1 this
// Langevin step leaves exp(-lambda_r sum w e^2 - sum_d Lambda_d x_d^2)
// invariant, so the privacy scale is applied exactly once, here:
// lambda_r = scale * lambda_r_base and Lambda = scale * Lambda_base.
inline HyperParams scaled_hyperparams(double scale, std::size_t k, const SgldConfig& cfg) {
  HyperParams hp = HyperParams::uniform(k, scale * cfg.lambda_r, scale * cfg.lambda);
  if (!cfg.lambda_u.empty()) {
    if (cfg.lambda_u.size() != k) throw std::invalid_argument("lambda_u needs k entries");
    for (std::size_t d = 0; d < k; ++d) hp.lambda_u[d] = scale * cfg.lambda_u[d];
  }
  if (!cfg.lambda_v.empty()) {
    if (cfg.lambda_v.size() != k) throw std::invalid_argument("lambda_v needs k entries");
    for (std::size_t d = 0; d < k; ++d) hp.lambda_v[d] = scale * cfg.lambda_v[d];
  }
  hp.alpha = cfg.alpha;
  hp.beta = cfg.beta;
  return hp;
}

// Everything the stochastic gradient needs besides the model.
struct GradientContext {
  const HyperParams* hp = nullptr;
  std::span<const double> weights;  // empty = all ones
  std::uint64_t total = 0;          // N
  std::span<const std::uint32_t> user_counts;  // N_i
  std::span<const std::uint32_t> item_counts;  // N_j
};

inline GradientContext make_context(const HyperParams& hp, std::span<const double> weights,
                                    const BlockMeta& meta) {
  return {&hp, weights, meta.n_triples, meta.user_counts, meta.item_counts};
}

// Unbiased single-rating estimate of the gradient of the scaled energy with
// respect to (u_i, v_j):
//   g_u = -N w_i lambda_r e v_j + (N / N_i) Lambda_u o u_i
//   g_v = -N w_i lambda_r e u_i + (N / N_j) Lambda_v o v_j
// Averaged over all N ratings it equals the full gradient.
inline void scaled_gradient(const FactorModel& m, const RatingTriple& t, const GradientContext& ctx,
                            std::span<double> grad_u, std::span<double> grad_v) {
  const std::uint32_t n_i = ctx.user_counts[t.user];
  const std::uint32_t n_j = ctx.item_counts[t.item];
  if (n_i == 0 || n_j == 0)
    throw std::logic_error("rating " + describe_triple(t) + " belongs to an entity with no ratings");
  auto u = m.user(t.user);
  auto v = m.item(t.item);
  const double n = static_cast<double>(ctx.total);
  const double w = ctx.weights.empty() ? 1.0 : ctx.weights[t.user];
  double e = t.rating;
  for (std::size_t d = 0; d < m.k(); ++d) e -= u[d] * v[d];
  const double data = -n * w * ctx.hp->lambda_r * e;
  const double prior_u = n / n_i;
  const double prior_v = n / n_j;
  for (std::size_t d = 0; d < m.k(); ++d) {
    grad_u[d] = data * v[d] + prior_u * ctx.hp->lambda_u[d] * u[d];
    grad_v[d] = data * u[d] + prior_v * ctx.hp->lambda_v[d] * v[d];
  }
}

struct SgldScratch {
  std::vector<double> grad_u, grad_v;
  explicit SgldScratch(std::size_t k) : grad_u(k), grad_v(k) {}
};

// One Langevin update on r_ij: settle the noise both rows owe for steps they
// sat out, take the gradient step, then add this step's noise.
template <NoiseInjector Injector>
void sgld_step(FactorModel& m, const RatingTriple& t, double eta, const GradientContext& ctx,
               NoiseLedger& ledger, Injector& noise, SgldScratch& scratch) {
  const std::uint64_t step = ledger.tick();
  const RowRef uref{RowKind::kUser, t.user}, vref{RowKind::kItem, t.item};
  auto u = m.user(t.user);
  auto v = m.item(t.item);
  catch_up(u, uref, ledger, noise, step - 1);
  catch_up(v, vref, ledger, noise, step - 1);
  scaled_gradient(m, t, ctx, scratch.grad_u, scratch.grad_v);
  bool finite = true;
  for (std::size_t d = 0; d < m.k(); ++d) {
    u[d] -= eta * scratch.grad_u[d];
    v[d] -= eta * scratch.grad_v[d];
    finite = finite && std::isfinite(u[d]) && std::isfinite(v[d]);
  }
  if (!finite) throw DivergenceError("non-finite SGLD update at " + describe_triple(t));
  noise.inject(u, uref, step - 1, step);
  noise.inject(v, vref, step - 1, step);
  ledger.set_last(uref, step);
  ledger.set_last(vref, step);
}

// Brings every row that holds ratings up to the current clock. Rows of
// entities without ratings are never sampled and keep their initial values.
template <NoiseInjector Injector>
void catch_up_all(FactorModel& m, const BlockMeta& meta, NoiseLedger& ledger, Injector& noise) {
  const std::uint64_t now = ledger.clock();
  for (std::uint32_t i = 0; i < meta.n_users; ++i)
    if (meta.user_counts[i] > 0) catch_up(m.user(i), {RowKind::kUser, i}, ledger, noise, now);
  for (std::uint32_t j = 0; j < meta.n_items; ++j)
    if (meta.item_counts[j] > 0) catch_up(m.item(j), {RowKind::kItem, j}, ledger, noise, now);
}

// Conjugate update of the diagonal prior precisions:
//   Lambda_u[d] ~ Gamma(alpha + n_users / 2, rate = beta + sum_i U[i,d]^2 / 2)
// and likewise for Lambda_v.
inline void gibbs_hyperparams(const FactorModel& m, HyperParams& hp, Engine& rng) {
  auto draw = [&](const std::vector<double>& rows, std::size_t n, std::vector<double>& out) {
    const std::size_t k = m.k();
    out.resize(k);
    for (std::size_t d = 0; d < k; ++d) {
      double ss = 0;
      for (std::size_t r = 0; r < n; ++r) ss += rows[r * k + d] * rows[r * k + d];
      double shape = hp.alpha + 0.5 * static_cast<double>(n);
      double rate = hp.beta + 0.5 * ss;
      out[d] = std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
    }
  };
  draw(m.user_matrix(), m.n_users(), hp.lambda_u);
  draw(m.item_matrix(), m.n_items(), hp.lambda_v);
}

// Normal source picked by configuration: lookup table or direct generator.
class ConfiguredNormals {
 public:
  ConfiguredNormals(std::shared_ptr<const GaussianTable> table, std::uint64_t seed,
                    std::size_t segment_length)
      : direct_(seed) {
    if (table) table_.emplace(std::move(table), seed, segment_length);
  }
  double next() { return table_ ? table_->next() : direct_.next(); }

 private:
  std::optional<TableNormals> table_;
  TrueNormals direct_;
};

// Builds one noise injector per worker (index `workers` is the sweep).
class DefaultNoise {
 public:
  explicit DefaultNoise(const SgldConfig& cfg)
      : seed_(cfg.seed), segment_length_(cfg.segment_length) {
    if (cfg.table_size > 0) table_ = std::make_shared<const GaussianTable>(cfg.table_size, cfg.seed);
  }
  AggregateNoise<ConfiguredNormals> operator()(std::size_t worker, const NoiseLedger& ledger) {
    return {ledger, ConfiguredNormals(table_, derive_seed(seed_, "sgld-noise", ++draws_ * 1024 + worker),
                                      segment_length_)};
  }

 private:
  std::uint64_t seed_;
  std::size_t segment_length_;
  std::shared_ptr<const GaussianTable> table_;
  std::uint64_t draws_ = 0;
};

struct TraceRecord {
  std::size_t epoch = 0;
  double seconds = 0;
  double eta = 0;
  double objective = 0;  // unscaled weighted F
  double rmse = 0;       // validation when given, training otherwise
  double lambda_u_mean = 0;
  double lambda_v_mean = 0;
  std::size_t ratings = 0;
};

struct SampleResult {
  std::vector<TraceRecord> trace;
  HyperParams hyper;
  std::uint64_t steps = 0;
  std::size_t snapshots = 0;
};

inline std::string format_trace(const std::vector<TraceRecord>& trace, char delim = ',') {
  std::ostringstream os;
  os.precision(10);
  os << "epoch" << delim << "seconds" << delim << "objective" << delim << "rmse" << delim
     << "lambda_u_mean" << delim << "lambda_v_mean\n";
  for (const auto& r : trace)
    os << r.epoch << delim << r.seconds << delim << r.objective << delim << r.rmse << delim
       << r.lambda_u_mean << delim << r.lambda_v_mean << '\n';
  return os.str();
}

// Runs cfg.epochs rounds of SGLD over `source` targeting exp(-scale * F).
// `make_noise(worker, ledger)` supplies the noise injectors, so tests can
// substitute deterministic noise. The final state is the released sample.
template <BlockSource Source, typename NoiseFactory>
SampleResult sample_with(FactorModel& m, const Source& source, double scale,
                         std::span<const double> weights, const SgldConfig& cfg,
                         NoiseFactory&& make_noise,
                         std::span<const RatingTriple> validation = {}) {
  cfg.validate();
  if (!(scale > 0)) throw std::invalid_argument("privacy scale must be positive");
  if (m.biases()) throw std::invalid_argument("the private sampler runs without biases");
  const auto& meta = source.meta();
  if (m.n_users() != meta.n_users || m.n_items() != meta.n_items)
    throw std::invalid_argument("model shape does not match the dataset");
  if (!weights.empty() && weights.size() != meta.n_users)
    throw std::invalid_argument("one weight per user required");

  SampleResult result;
  result.hyper = scaled_hyperparams(scale, m.k(), cfg);
  NoiseLedger ledger(meta.n_users, meta.n_items);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double eta = learning_rate(cfg.eta0, cfg.gamma, epoch);
    auto start = std::chrono::steady_clock::now();
    ledger.begin_round(cfg.zeta * eta);
    const GradientContext ctx = make_context(result.hyper, weights, meta);
    std::vector<decltype(make_noise(std::size_t{0}, ledger))> injectors;
    for (std::size_t w = 0; w <= cfg.workers; ++w) injectors.push_back(make_noise(w, ledger));
    PeriodicWriter writer(cfg.snapshot_path.empty() ? 0 : cfg.snapshot_every,
                          [&](std::size_t) { save_snapshot(cfg.snapshot_path, m); });
    auto stats = run_pass(
        source, cfg.workers,
        [&](const UserBlock& block, std::size_t w) {
          SgldScratch scratch(m.k());
          process_block(block, meta.tier_cutoffs, cfg.tiered_schedule, m, cfg.prefetch,
                        cfg.prefetch_stride, [&](const RatingTriple& t) {
                          sgld_step(m, t, eta, ctx, ledger, injectors[w], scratch);
                        });
        },
        &writer);
    writer.stop();
    result.snapshots += writer.writes();
    if (stats.ratings != meta.n_triples)
      throw std::logic_error("epoch visited " + std::to_string(stats.ratings) + " of " +
                             std::to_string(meta.n_triples) + " ratings");
    catch_up_all(m, meta, ledger, injectors[cfg.workers]);
    if (!m.all_finite())
      throw DivergenceError("sampler diverged in epoch " + std::to_string(epoch) +
                            "; lower eta0");
    if (!cfg.fix_hyperparams) {
      auto rng = make_engine(cfg.seed, "gibbs", epoch);
      gibbs_hyperparams(m, result.hyper, rng);
    }

    TraceRecord rec;
    rec.epoch = epoch;
    rec.eta = eta;
    rec.ratings = stats.ratings;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double sq = 0;
    std::size_t count = 0;
    double weighted = 0;
    {
      auto reader = source.open();
      while (auto block = reader.next()) {
        for (const auto& t : block->triples) {
          double e = t.rating - m.predict_unchecked(t.user, t.item);
          sq += e * e;
          weighted += (weights.empty() ? 1.0 : weights[t.user]) * e * e;
          ++count;
        }
      }
    }
    rec.objective = weighted + cfg.lambda * m.frobenius_sq();
    rec.rmse = validation.empty() ? std::sqrt(sq / std::max<std::size_t>(count, 1))
                                  : rmse(m, validation);
    auto mean = [](const std::vector<double>& v) {
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    rec.lambda_u_mean = mean(result.hyper.lambda_u);
    rec.lambda_v_mean = mean(result.hyper.lambda_v);
    if (!std::isfinite(rec.objective))
      throw DivergenceError("objective became non-finite in epoch " + std::to_string(epoch));
    result.trace.push_back(rec);
  }
  result.steps = ledger.clock();
  return result;
}

// Samples from exp(-(eps / 4B) F) using the budget's weights.
template <BlockSource Source>
SampleResult sample(FactorModel& m, const Source& source, const PrivacyBudget& budget,
                    const SgldConfig& cfg, std::span<const RatingTriple> validation = {}) {
  DefaultNoise noise(cfg);
  return sample_with(m, source, budget.scale(), budget.weights, cfg, noise, validation);
}

}  // namespace dpmf

#endif  // DPMF_SGLD_SOLVER_HPP_
