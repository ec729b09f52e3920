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
#ifndef DPMF_SGD_SOLVER_HPP_
#define DPMF_SGD_SOLVER_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dpmf/block_io.hpp"
#include "dpmf/model.hpp"
#include "dpmf/pipeline.hpp"

namespace dpmf {

struct SgdConfig {
  double eta0 = 0.02;
  double gamma = 1.0;
  double lambda = 5e-3;
  std::size_t epochs = 15;
  std::size_t workers = 1;
  bool tiered_schedule = true;   // visit hot tiers first inside each block
  bool prefetch = false;
  std::size_t prefetch_stride = 2;
  std::size_t snapshot_every = 0;  // blocks between snapshots, 0 = never
  std::filesystem::path snapshot_path;
  bool eval_objective = true;

  void validate() const {
    if (!(eta0 > 0)) throw std::invalid_argument("eta0 must be positive");
    if (gamma < 0) throw std::invalid_argument("gamma must be non-negative");
    if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  }
};

// eta_t = eta0 / t^gamma for rounds t = 1, 2, ...
inline double learning_rate(double eta0, double gamma, std::size_t round) {
  return eta0 / std::pow(static_cast<double>(round), gamma);
}

inline std::string describe_triple(const RatingTriple& t) {
  std::ostringstream os;
  os << "(user " << t.user << ", item " << t.item << ", rating " << t.rating << ")";
  return os.str();
}

// One SGD update on r_ij. The residual is taken from the pre-update values
// and both factor updates read the old u_i / v_j. `weight` scales the data
// term (w_i in the weighted objective).
inline void sgd_step(FactorModel& m, const RatingTriple& t, double eta, double lambda,
                     double weight = 1.0) {
  double* u = m.user(t.user).data();
  double* v = m.item(t.item).data();
  const std::size_t k = m.k();
  double e = t.rating - m.predict_unchecked(t.user, t.item);
  if (!std::isfinite(e)) throw DivergenceError("non-finite residual at " + describe_triple(t));
  const double shrink = 1.0 - eta * lambda;
  const double g = eta * weight * e;
  for (std::size_t d = 0; d < k; ++d) {
    double ud = u[d], vd = v[d];
    u[d] = shrink * ud + g * vd;
    v[d] = shrink * vd + g * ud;
  }
  if (m.biases()) {
    double& bu = m.user_bias(t.user);
    double& bm = m.item_bias(t.item);
    double& b0 = m.global_bias();
    bu += eta * (weight * e - lambda * bu);
    bm += eta * (weight * e - lambda * bm);
    b0 += eta * (weight * e - lambda * b0);
  }
}

// Visit order for one block: all ratings of the hottest tier (across every
// user in the block) first, then the next tier, ...; ascending item id inside
// a tier, block order for equal items. Returns indices into block.triples.
inline std::vector<std::uint32_t> tiered_update_order(const UserBlock& block,
                                                      const std::vector<std::uint32_t>& cutoffs) {
  const auto& ts = block.triples;
  std::vector<std::uint32_t> order(ts.size());
  std::iota(order.begin(), order.end(), 0u);
  auto tier = [&](std::uint32_t item) {
    return std::upper_bound(cutoffs.begin(), cutoffs.end(), item) - cutoffs.begin();
  };
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    auto ta = tier(ts[a].item), tb = tier(ts[b].item);
    if (ta != tb) return ta < tb;
    return ts[a].item < ts[b].item;
  });
  return order;
}

inline void prefetch_row(std::span<const double> row) {
#if defined(__GNUC__)
  const char* p = reinterpret_cast<const char*>(row.data());
  for (std::size_t off = 0; off < row.size_bytes(); off += 64) __builtin_prefetch(p + off, 1, 3);
#else
  (void)row;
#endif
}

struct EpochRecord {
  std::size_t epoch = 0;
  double seconds = 0;
  double eta = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  std::size_t ratings = 0;
  double throughput() const { return seconds > 0 ? static_cast<double>(ratings) / seconds : 0; }
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t snapshots = 0;
};

// Delimited epoch log: epoch,seconds,objective,rmse,ratings_per_sec.
inline std::string format_epoch_log(const TrainLog& log, char delim = ',') {
  std::ostringstream os;
  os << "epoch" << delim << "seconds" << delim << "objective" << delim << "rmse" << delim
     << "ratings_per_sec\n";
  os.precision(10);
  for (const auto& e : log.epochs) {
    os << e.epoch << delim << e.seconds << delim << e.objective << delim;
    if (!std::isnan(e.rmse)) os << e.rmse;
    os << delim << e.throughput() << '\n';
  }
  return os.str();
}

// Runs the schedule of one block through `update(triple)`, optionally
// prefetching the item row `stride` updates ahead.
template <typename Update>
void process_block(const UserBlock& block, const std::vector<std::uint32_t>& cutoffs,
                   bool tiered, const FactorModel& m, bool prefetch, std::size_t stride,
                   Update&& update) {
  const auto& ts = block.triples;
  if (tiered) {
    auto order = tiered_update_order(block, cutoffs);
    for (std::size_t p = 0; p < order.size(); ++p) {
      if (prefetch && p + stride < order.size()) prefetch_row(m.item(ts[order[p + stride]].item));
      update(ts[order[p]]);
    }
  } else {
    for (std::size_t p = 0; p < ts.size(); ++p) {
      if (prefetch && p + stride < ts.size()) prefetch_row(m.item(ts[p + stride].item));
      update(ts[p]);
    }
  }
}

// Cache-aware SGD over a blocked dataset. Workers update `m` without locks.
template <BlockSource Source>
TrainLog train(FactorModel& m, const Source& source, const SgdConfig& cfg,
               std::span<const double> weights = {},
               std::span<const RatingTriple> validation = {}) {
  cfg.validate();
  const auto& meta = source.meta();
  if (m.n_users() != meta.n_users || m.n_items() != meta.n_items)
    throw std::invalid_argument("model shape does not match the dataset");
  if (!weights.empty() && weights.size() != meta.n_users)
    throw std::invalid_argument("one weight per user required");

  TrainLog log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double eta = learning_rate(cfg.eta0, cfg.gamma, epoch);
    auto start = std::chrono::steady_clock::now();
    PeriodicWriter writer(cfg.snapshot_path.empty() ? 0 : cfg.snapshot_every,
                          [&](std::size_t) { save_snapshot(cfg.snapshot_path, m); });
    auto stats = run_pass(
        source, cfg.workers,
        [&](const UserBlock& block, std::size_t) {
          process_block(block, meta.tier_cutoffs, cfg.tiered_schedule, m, cfg.prefetch,
                        cfg.prefetch_stride, [&](const RatingTriple& t) {
                          sgd_step(m, t, eta, cfg.lambda, weights.empty() ? 1.0 : weights[t.user]);
                        });
        },
        &writer);
    writer.stop();
    log.snapshots += writer.writes();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.eta = eta;
    rec.ratings = stats.ratings;
    if (stats.ratings != meta.n_triples)
      throw std::logic_error("epoch visited " + std::to_string(stats.ratings) + " of " +
                             std::to_string(meta.n_triples) + " ratings");
    if (cfg.eval_objective) {
      rec.objective = objective(m, source, cfg.lambda, weights);
      if (!std::isfinite(rec.objective))
        throw DivergenceError("objective became non-finite in epoch " + std::to_string(epoch) +
                              " (eta " + std::to_string(eta) + "); lower eta0 or raise lambda");
    }
    if (!validation.empty()) rec.rmse = rmse(m, validation);
    log.epochs.push_back(rec);
  }
  return log;
}

}  // namespace dpmf

#endif  // DPMF_SGD_SOLVER_HPP_
