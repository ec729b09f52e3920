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
#ifndef DPMF_NOISE_HPP_
#define DPMF_NOISE_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "dpmf/rng.hpp"

namespace dpmf {

// Pool of standard normal values generated once and then read in contiguous
// segments starting at random offsets.
//
// The pool is a stratified sample: entry i is the normal quantile of a
// uniform draw from [i/T, (i+1)/T), and the pool is then shuffled. A read at
// a uniformly random position is therefore exactly N(0,1) distributed, and the
// empirical CDF of the pool is within 1/T of the normal CDF everywhere, so
// long runs of table reads stay indistinguishable from a true generator.
class GaussianTable {
 public:
  GaussianTable(std::size_t size, std::uint64_t seed) : values_(size) {
    if (size == 0) throw std::invalid_argument("gaussian table must not be empty");
    auto rng = make_engine(seed, "table");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    boost::math::normal_distribution<double> normal;
    const double n = static_cast<double>(size);
    const double tiny = std::numeric_limits<double>::min();
    for (std::size_t i = 0; i < size; ++i) {
      double p = (static_cast<double>(i) + unit(rng)) / n;
      p = std::clamp(p, tiny, 1.0 - std::numeric_limits<double>::epsilon());
      values_[i] = boost::math::quantile(normal, p);
    }
    std::shuffle(values_.begin(), values_.end(), rng);
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
};

// Reads `segment_length` consecutive entries (wrapping at the end of the
// table) before jumping to a new random offset.
class TableNormals {
 public:
  TableNormals(std::shared_ptr<const GaussianTable> table, std::uint64_t seed,
               std::size_t segment_length = 64)
      : table_(std::move(table)), rng_(seed), segment_length_(segment_length ? segment_length : 1) {}

  double next() {
    if (remaining_ == 0) {
      cursor_ = static_cast<std::size_t>(rng_() % table_->size());
      remaining_ = segment_length_;
    }
    double x = (*table_)[cursor_];
    if (++cursor_ == table_->size()) cursor_ = 0;
    --remaining_;
    return x;
  }

  void fill(std::span<double> out) {
    for (double& x : out) x = next();
  }

 private:
  std::shared_ptr<const GaussianTable> table_;
  Engine rng_;
  std::size_t segment_length_;
  std::size_t cursor_ = 0;
  std::size_t remaining_ = 0;
};

// Direct generator, the reference the table is compared against.
class TrueNormals {
 public:
  explicit TrueNormals(std::uint64_t seed) : rng_(seed) {}
  double next() { return normal_(rng_); }
  void fill(std::span<double> out) {
    for (double& x : out) x = normal_(rng_);
  }

 private:
  Engine rng_;
  std::normal_distribution<double> normal_;
};

enum class RowKind : std::uint8_t { kUser, kItem };

struct RowRef {
  RowKind kind;
  std::uint32_t id;
};

// Deferred-noise bookkeeping. The clock counts SGLD steps; step s carries
// noise variance zeta * eta_s per coordinate. Each row remembers the last
// step whose noise it has received, so noise owed for idle steps (a, b] is a
// single N(0, prefix(b) - prefix(a)) draw.
class NoiseLedger {
 public:
  NoiseLedger(std::size_t n_users, std::size_t n_items)
      : user_last_(n_users, 0), item_last_(n_items, 0) {}

  // Every step from now on (until the next call) has this variance.
  // Only call while no step is running.
  void begin_round(double variance_per_step) {
    if (variance_per_step < 0) throw std::invalid_argument("negative noise variance");
    std::uint64_t now = clock();
    double base = prefix(now);
    if (!segments_.empty() && segments_.back().start == now) segments_.pop_back();
    segments_.push_back({now, base, variance_per_step});
  }

  // Claims the next step number.
  std::uint64_t tick() { return clock_.fetch_add(1, std::memory_order_relaxed) + 1; }
  std::uint64_t clock() const { return clock_.load(std::memory_order_relaxed); }

  // Cumulative variance of steps 1..t.
  double prefix(std::uint64_t t) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](std::uint64_t v, const Segment& s) { return v < s.start; });
    if (it == segments_.begin()) return 0.0;
    --it;
    return it->base + static_cast<double>(t - it->start) * it->rate;
  }

  double variance(std::uint64_t from, std::uint64_t to) const {
    return to > from ? prefix(to) - prefix(from) : 0.0;
  }

  std::uint64_t last(RowRef r) const {
    return std::atomic_ref<std::uint64_t>(slot(r)).load(std::memory_order_relaxed);
  }
  void set_last(RowRef r, std::uint64_t step) {
    std::atomic_ref<std::uint64_t>(slot(r)).store(step, std::memory_order_relaxed);
  }

  std::size_t n_users() const { return user_last_.size(); }
  std::size_t n_items() const { return item_last_.size(); }

 private:
  struct Segment {
    std::uint64_t start;
    double base;
    double rate;
  };

  std::uint64_t& slot(RowRef r) const {
    auto& v = r.kind == RowKind::kUser ? user_last_ : item_last_;
    return v[r.id];
  }

  mutable std::vector<std::uint64_t> user_last_;
  mutable std::vector<std::uint64_t> item_last_;
  std::atomic<std::uint64_t> clock_{0};
  std::vector<Segment> segments_;
};

// Adds the noise owed for steps (from, to] as one aggregate draw, using the
// closure of the normal family under addition.
template <typename Normals>
class AggregateNoise {
 public:
  AggregateNoise(const NoiseLedger& ledger, Normals normals)
      : ledger_(&ledger), normals_(std::move(normals)) {}

  void inject(std::span<double> row, RowRef, std::uint64_t from, std::uint64_t to) {
    double var = ledger_->variance(from, to);
    if (!(var > 0)) return;
    double sd = std::sqrt(var);
    for (double& x : row) x += sd * normals_.next();
  }

  Normals& normals() { return normals_; }

 private:
  const NoiseLedger* ledger_;
  Normals normals_;
};

template <typename N>
concept NoiseInjector = requires(N& n, std::span<double> row, RowRef r, std::uint64_t s) {
  n.inject(row, r, s, s);
};

// Brings `row` up to step `to`; a no-op when it is already there.
template <NoiseInjector Injector>
void catch_up(std::span<double> row, RowRef ref, NoiseLedger& ledger, Injector& noise,
              std::uint64_t to) {
  std::uint64_t from = ledger.last(ref);
  if (from >= to) return;
  noise.inject(row, ref, from, to);
  ledger.set_last(ref, to);
}

}  // namespace dpmf

#endif  // DPMF_NOISE_HPP_
