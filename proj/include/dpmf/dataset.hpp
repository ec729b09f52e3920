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
#ifndef DPMF_DATASET_HPP_
#define DPMF_DATASET_HPP_

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpmf/errors.hpp"
#include "dpmf/rng.hpp"

namespace dpmf {

struct RatingRange {
  double min = 1.0;
  double max = 5.0;
  double span() const { return max - min; }
  bool contains(double r) const { return r >= min && r <= max; }
};

// One observation r_ij. Same layout as the on-disk record.
struct RatingTriple {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  float rating = 0.0f;

  friend bool operator==(const RatingTriple&, const RatingTriple&) = default;
};

inline bool by_user_item(const RatingTriple& a, const RatingTriple& b) {
  return a.user != b.user ? a.user < b.user : a.item < b.item;
}

// Dense re-indexed ratings, grouped by user (contiguous per user, items
// ascending within a user). user_ids / item_ids map dense ids back to the
// ids found in the source.
class RatingDataset {
 public:
  RatingDataset() = default;

  // Takes ownership of triples with dense ids; sorts and computes counts.
  // Empty id maps default to the identity.
  static RatingDataset from_triples(std::size_t n_users, std::size_t n_items,
                                    std::vector<RatingTriple> triples,
                                    RatingRange range,
                                    std::vector<std::int64_t> user_ids = {},
                                    std::vector<std::int64_t> item_ids = {}) {
    RatingDataset ds;
    ds.range_ = range;
    for (const auto& t : triples) {
      if (t.user >= n_users || t.item >= n_items)
        throw DataError("triple references id outside the dataset");
    }
    std::stable_sort(triples.begin(), triples.end(), by_user_item);
    ds.triples_ = std::move(triples);
    ds.user_offsets_.assign(n_users + 1, 0);
    ds.item_counts_.assign(n_items, 0);
    for (const auto& t : ds.triples_) {
      ++ds.user_offsets_[t.user + 1];
      ++ds.item_counts_[t.item];
    }
    std::partial_sum(ds.user_offsets_.begin(), ds.user_offsets_.end(),
                     ds.user_offsets_.begin());
    if (user_ids.empty()) {
      user_ids.resize(n_users);
      std::iota(user_ids.begin(), user_ids.end(), 0);
    }
    if (item_ids.empty()) {
      item_ids.resize(n_items);
      std::iota(item_ids.begin(), item_ids.end(), 0);
    }
    if (user_ids.size() != n_users || item_ids.size() != n_items)
      throw DataError("id map size does not match entity count");
    ds.user_ids_ = std::move(user_ids);
    ds.item_ids_ = std::move(item_ids);
    return ds;
  }

  std::size_t n_users() const {
    return user_offsets_.empty() ? 0 : user_offsets_.size() - 1;
  }
  std::size_t n_items() const { return item_counts_.size(); }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }
  const RatingRange& range() const { return range_; }

  std::span<const RatingTriple> triples() const { return triples_; }
  std::span<const RatingTriple> user_ratings(std::size_t user) const {
    return std::span<const RatingTriple>(triples_).subspan(
        user_offsets_[user], user_offsets_[user + 1] - user_offsets_[user]);
  }
  std::size_t user_count(std::size_t user) const {
    return user_offsets_[user + 1] - user_offsets_[user];
  }
  std::vector<std::uint32_t> user_counts() const {
    std::vector<std::uint32_t> out(n_users());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<std::uint32_t>(user_count(i));
    return out;
  }
  const std::vector<std::uint32_t>& item_counts() const { return item_counts_; }
  const std::vector<std::int64_t>& user_ids() const { return user_ids_; }
  const std::vector<std::int64_t>& item_ids() const { return item_ids_; }

 private:
  std::vector<RatingTriple> triples_;
  std::vector<std::uint64_t> user_offsets_;
  std::vector<std::uint32_t> item_counts_;
  std::vector<std::int64_t> user_ids_;
  std::vector<std::int64_t> item_ids_;
  RatingRange range_;
};

// Column layout of delimited rating text. Extra columns (timestamps, ...) are
// ignored.
struct TextSchema {
  char delimiter = ',';
  int user_column = 0;
  int item_column = 1;
  int rating_column = 2;
  RatingRange range;
};

namespace detail {

struct RawRating {
  std::int64_t user;
  std::int64_t item;
  double rating;
};

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

inline std::string_view trim_ws(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  field = trim_ws(field);
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw ParseError(line, std::string("cannot parse ") + what + " '" +
                               std::string(field) + "'");
  return value;
}

inline bool is_blank_or_comment(std::string_view line) {
  line = trim_ws(line);
  return line.empty() || line.front() == '#';
}

// Dedup (last occurrence wins) and dense re-indexing by ascending source id.
inline RatingDataset build_dataset(std::vector<RawRating> raw, RatingRange range) {
  if (raw.empty()) throw EmptyDatasetError();
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return raw[a].user != raw[b].user ? raw[a].user < raw[b].user
                                      : raw[a].item < raw[b].item;
  });
  std::vector<RawRating> kept;
  kept.reserve(raw.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& r = raw[order[k]];
    bool last_of_run = k + 1 == order.size() || raw[order[k + 1]].user != r.user ||
                       raw[order[k + 1]].item != r.item;
    if (last_of_run) kept.push_back(r);
  }

  auto dense_ids = [&](auto field) {
    std::vector<std::int64_t> ids;
    ids.reserve(kept.size());
    for (const auto& r : kept) ids.push_back(field(r));
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  };
  auto user_ids = dense_ids([](const RawRating& r) { return r.user; });
  auto item_ids = dense_ids([](const RawRating& r) { return r.item; });
  auto lookup = [](const std::vector<std::int64_t>& ids, std::int64_t id) {
    return static_cast<std::uint32_t>(
        std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };

  std::vector<RatingTriple> triples;
  triples.reserve(kept.size());
  for (const auto& r : kept)
    triples.push_back({lookup(user_ids, r.user), lookup(item_ids, r.item),
                       static_cast<float>(r.rating)});
  std::size_t nu = user_ids.size(), ni = item_ids.size();
  return RatingDataset::from_triples(nu, ni, std::move(triples), range,
                                     std::move(user_ids), std::move(item_ids));
}

}  // namespace detail

// Reads delimited (user, item, rating) lines. Blank lines and lines starting
// with '#' are skipped.
inline RatingDataset ingest(std::istream& in, const TextSchema& schema = {}) {
  std::vector<detail::RawRating> raw;
  std::string line;
  std::size_t line_no = 0;
  int needed = std::max({schema.user_column, schema.item_column, schema.rating_column});
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    auto fields = detail::split(line, schema.delimiter);
    if (static_cast<int>(fields.size()) <= needed)
      throw ParseError(line_no, "expected at least " + std::to_string(needed + 1) +
                                    " fields, got " + std::to_string(fields.size()));
    detail::RawRating r;
    r.user = detail::parse_number<std::int64_t>(fields[schema.user_column], line_no, "user id");
    r.item = detail::parse_number<std::int64_t>(fields[schema.item_column], line_no, "item id");
    r.rating = detail::parse_number<double>(fields[schema.rating_column], line_no, "rating");
    if (!schema.range.contains(r.rating))
      throw RangeError(line_no, "rating " + std::to_string(r.rating) + " outside [" +
                                    std::to_string(schema.range.min) + ", " +
                                    std::to_string(schema.range.max) + "]");
    raw.push_back(r);
  }
  return detail::build_dataset(std::move(raw), schema.range);
}

// Netflix prize per-movie layout: a "<movie>:" line followed by
// "<customer>,<rating>[,<date>]" lines.
inline RatingDataset ingest_netflix(std::istream& in, RatingRange range = {}) {
  std::vector<detail::RawRating> raw;
  std::string line;
  std::size_t line_no = 0;
  bool have_movie = false;
  std::int64_t movie = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    std::string_view view = detail::trim_ws(line);
    if (view.back() == ':') {
      movie = detail::parse_number<std::int64_t>(view.substr(0, view.size() - 1),
                                                 line_no, "movie id");
      have_movie = true;
      continue;
    }
    if (!have_movie) throw ParseError(line_no, "rating line before any movie header");
    auto fields = detail::split(view, ',');
    if (fields.size() < 2) throw ParseError(line_no, "expected customer,rating");
    detail::RawRating r;
    r.user = detail::parse_number<std::int64_t>(fields[0], line_no, "customer id");
    r.item = movie;
    r.rating = detail::parse_number<double>(fields[1], line_no, "rating");
    if (!range.contains(r.rating))
      throw RangeError(line_no, "rating " + std::to_string(r.rating) + " outside range");
    raw.push_back(r);
  }
  return detail::build_dataset(std::move(raw), range);
}

// Items ordered by descending popularity, cut into tiers. Item `order[p]` is
// the source item placed at position p; `rank` is the inverse.
struct TierPlan {
  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> rank;
  std::vector<std::uint32_t> cutoffs;  // cumulative tier ends, last tier implied
  std::vector<double> coverage;        // fraction of ratings per tier

  std::size_t tier_count() const { return coverage.size(); }
  std::size_t tier_of(std::uint32_t position) const {
    return static_cast<std::size_t>(
        std::upper_bound(cutoffs.begin(), cutoffs.end(), position) - cutoffs.begin());
  }
};

// Tier boundaries as positions: tiers are [0,c0), [c0,c1), ..., [c_last, n).
// A cutoff equal to n_items closes the final tier.
inline std::vector<double> tier_coverage(const std::vector<std::uint32_t>& sorted_counts,
                                         const std::vector<std::uint32_t>& cutoffs) {
  std::vector<double> coverage;
  double total = std::accumulate(sorted_counts.begin(), sorted_counts.end(), 0.0);
  std::size_t begin = 0;
  auto close = [&](std::size_t end) {
    double sum = 0;
    for (std::size_t p = begin; p < end; ++p) sum += sorted_counts[p];
    coverage.push_back(total > 0 ? sum / total : 0.0);
    begin = end;
  };
  for (auto c : cutoffs) close(c);
  if (begin < sorted_counts.size() || coverage.empty()) close(sorted_counts.size());
  return coverage;
}

inline TierPlan plan_tiers(const RatingDataset& ds, std::vector<std::uint32_t> cutoffs) {
  const std::size_t n = ds.n_items();
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    if (cutoffs[c] > n)
      throw std::invalid_argument("tier cutoff " + std::to_string(cutoffs[c]) +
                                  " exceeds item count " + std::to_string(n));
    if (c > 0 && cutoffs[c] <= cutoffs[c - 1])
      throw std::invalid_argument("tier cutoffs must be strictly increasing");
  }
  TierPlan plan;
  plan.order.resize(n);
  std::iota(plan.order.begin(), plan.order.end(), 0u);
  const auto& counts = ds.item_counts();
  const auto& ids = ds.item_ids();
  std::sort(plan.order.begin(), plan.order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return ids[a] < ids[b];
  });
  plan.rank.resize(n);
  for (std::uint32_t p = 0; p < n; ++p) plan.rank[plan.order[p]] = p;
  std::vector<std::uint32_t> sorted_counts(n);
  for (std::size_t p = 0; p < n; ++p) sorted_counts[p] = counts[plan.order[p]];
  plan.cutoffs = std::move(cutoffs);
  plan.coverage = tier_coverage(sorted_counts, plan.cutoffs);
  return plan;
}

// Drops default cutoffs that do not fit a small catalogue.
inline std::vector<std::uint32_t> clamp_cutoffs(std::vector<std::uint32_t> cutoffs,
                                                std::size_t n_items) {
  std::erase_if(cutoffs, [&](std::uint32_t c) { return c >= n_items || c == 0; });
  return cutoffs;
}

// Renumbers items so that item id == tier-plan position.
inline RatingDataset apply_plan(const RatingDataset& ds, const TierPlan& plan) {
  if (plan.rank.size() != ds.n_items())
    throw std::invalid_argument("tier plan does not cover all items");
  std::vector<RatingTriple> triples(ds.triples().begin(), ds.triples().end());
  for (auto& t : triples) t.item = plan.rank[t.item];
  std::vector<std::int64_t> item_ids(ds.n_items());
  for (std::size_t p = 0; p < item_ids.size(); ++p) item_ids[p] = ds.item_ids()[plan.order[p]];
  return RatingDataset::from_triples(ds.n_users(), ds.n_items(), std::move(triples), ds.range(),
                                     ds.user_ids(), std::move(item_ids));
}

// Random relabelling of users, used before blocking when block composition
// should not follow source id order.
inline RatingDataset shuffle_users(const RatingDataset& ds, std::uint64_t seed) {
  std::vector<std::uint32_t> perm(ds.n_users());
  std::iota(perm.begin(), perm.end(), 0u);
  auto rng = make_engine(seed, "ingest-shuffle");
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<RatingTriple> triples(ds.triples().begin(), ds.triples().end());
  for (auto& t : triples) t.user = perm[t.user];
  std::vector<std::int64_t> user_ids(ds.n_users());
  for (std::size_t u = 0; u < perm.size(); ++u) user_ids[perm[u]] = ds.user_ids()[u];
  return RatingDataset::from_triples(ds.n_users(), ds.n_items(), std::move(triples), ds.range(),
                                     std::move(user_ids), ds.item_ids());
}

// Contiguous range of users [first_user, first_user + user_count) with all of
// their ratings.
struct UserBlock {
  std::uint32_t first_user = 0;
  std::uint32_t user_count = 0;
  std::vector<RatingTriple> triples;
};

inline std::vector<UserBlock> make_blocks(const RatingDataset& ds, std::size_t users_per_block) {
  if (users_per_block == 0) throw std::invalid_argument("users_per_block must be positive");
  std::vector<UserBlock> blocks;
  for (std::size_t first = 0; first < ds.n_users(); first += users_per_block) {
    std::size_t count = std::min(users_per_block, ds.n_users() - first);
    UserBlock b;
    b.first_user = static_cast<std::uint32_t>(first);
    b.user_count = static_cast<std::uint32_t>(count);
    for (std::size_t u = first; u < first + count; ++u) {
      auto r = ds.user_ratings(u);
      b.triples.insert(b.triples.end(), r.begin(), r.end());
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

}  // namespace dpmf

#endif  // DPMF_DATASET_HPP_
