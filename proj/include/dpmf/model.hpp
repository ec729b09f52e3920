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
#ifndef DPMF_MODEL_HPP_
#define DPMF_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpmf/block_io.hpp"
#include "dpmf/dataset.hpp"
#include "dpmf/rng.hpp"

namespace dpmf {

// U (n_users x k) and V (n_items x k), row-major so that one entity's factors
// are contiguous, plus optional biases.
class FactorModel {
 public:
  FactorModel() = default;
  FactorModel(std::size_t n_users, std::size_t n_items, std::size_t k, bool biases = false)
      : k_(k), n_users_(n_users), n_items_(n_items), users_(n_users * k, 0.0),
        items_(n_items * k, 0.0), biases_(biases) {
    if (k == 0) throw std::invalid_argument("latent dimension must be at least 1");
    if (biases) {
      user_bias_.assign(n_users, 0.0);
      item_bias_.assign(n_items, 0.0);
    }
  }

  std::size_t k() const { return k_; }
  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  bool biases() const { return biases_; }

  std::span<double> user(std::size_t i) { return {users_.data() + i * k_, k_}; }
  std::span<const double> user(std::size_t i) const { return {users_.data() + i * k_, k_}; }
  std::span<double> item(std::size_t j) { return {items_.data() + j * k_, k_}; }
  std::span<const double> item(std::size_t j) const { return {items_.data() + j * k_, k_}; }

  std::vector<double>& user_matrix() { return users_; }
  const std::vector<double>& user_matrix() const { return users_; }
  std::vector<double>& item_matrix() { return items_; }
  const std::vector<double>& item_matrix() const { return items_; }

  double& user_bias(std::size_t i) { return user_bias_[i]; }
  double user_bias(std::size_t i) const { return biases_ ? user_bias_[i] : 0.0; }
  double& item_bias(std::size_t j) { return item_bias_[j]; }
  double item_bias(std::size_t j) const { return biases_ ? item_bias_[j] : 0.0; }
  double& global_bias() { return global_bias_; }
  double global_bias() const { return biases_ ? global_bias_ : 0.0; }

  // Unchecked <u_i, v_j> (+ biases).
  double predict_unchecked(std::size_t i, std::size_t j) const {
    const double* u = users_.data() + i * k_;
    const double* v = items_.data() + j * k_;
    double s = 0;
    for (std::size_t d = 0; d < k_; ++d) s += u[d] * v[d];
    if (biases_) s += user_bias_[i] + item_bias_[j] + global_bias_;
    return s;
  }

  double predict(std::size_t i, std::size_t j) const {
    if (i >= n_users_ || j >= n_items_)
      throw std::out_of_range("predict(" + std::to_string(i) + ", " + std::to_string(j) +
                              ") outside " + std::to_string(n_users_) + "x" +
                              std::to_string(n_items_));
    return predict_unchecked(i, j);
  }

  double frobenius_sq() const {
    double s = 0;
    for (double x : users_) s += x * x;
    for (double x : items_) s += x * x;
    return s;
  }

  bool all_finite() const {
    for (double x : users_) if (!std::isfinite(x)) return false;
    for (double x : items_) if (!std::isfinite(x)) return false;
    for (double x : user_bias_) if (!std::isfinite(x)) return false;
    for (double x : item_bias_) if (!std::isfinite(x)) return false;
    return std::isfinite(global_bias_);
  }

  friend bool operator==(const FactorModel&, const FactorModel&) = default;

 private:
  std::size_t k_ = 0;
  std::size_t n_users_ = 0;
  std::size_t n_items_ = 0;
  std::vector<double> users_;
  std::vector<double> items_;
  std::vector<double> user_bias_;
  std::vector<double> item_bias_;
  double global_bias_ = 0;
  bool biases_ = false;
};

// Precisions of the Bayesian view: ratings ~ N(<u_i, v_j>, 1/lambda_r) up to
// the sampler's conventions, diagonal priors Lambda_u / Lambda_v on factors,
// Gamma(alpha, beta) hyperpriors on the diagonals.
struct HyperParams {
  double lambda_r = 1.0;
  std::vector<double> lambda_u;
  std::vector<double> lambda_v;
  double alpha = 1.0;
  double beta = 100.0;

  static HyperParams uniform(std::size_t k, double lambda_r, double prior) {
    return {lambda_r, std::vector<double>(k, prior), std::vector<double>(k, prior)};
  }

  bool valid() const {
    auto pos = [](double x) { return x > 0 && std::isfinite(x); };
    return pos(lambda_r) && std::all_of(lambda_u.begin(), lambda_u.end(), pos) &&
           std::all_of(lambda_v.begin(), lambda_v.end(), pos);
  }
};

// Factors i.i.d. N(0, scale^2), biases zero.
inline FactorModel init_model(std::size_t n_users, std::size_t n_items, std::size_t k,
                              double scale, std::uint64_t seed, bool biases = false) {
  FactorModel m(n_users, n_items, k, biases);
  if (scale == 0) return m;
  auto rng = make_engine(seed, "init");
  std::normal_distribution<double> normal(0.0, scale);
  for (double& x : m.user_matrix()) x = normal(rng);
  for (double& x : m.item_matrix()) x = normal(rng);
  return m;
}

// sum_i w_i (r_ij - prediction)^2 + lambda (|U|_F^2 + |V|_F^2), plus
// lambda * |biases|^2 when biases are on. Empty weights mean w_i = 1.
inline double residual_sum(const FactorModel& m, std::span<const RatingTriple> triples,
                           std::span<const double> weights = {}) {
  double s = 0;
  for (const auto& t : triples) {
    double e = t.rating - m.predict(t.user, t.item);
    s += (weights.empty() ? 1.0 : weights[t.user]) * e * e;
  }
  return s;
}

inline double penalty(const FactorModel& m, double lambda) {
  double p = m.frobenius_sq();
  if (m.biases()) {
    for (std::size_t i = 0; i < m.n_users(); ++i) p += m.user_bias(i) * m.user_bias(i);
    for (std::size_t j = 0; j < m.n_items(); ++j) p += m.item_bias(j) * m.item_bias(j);
  }
  return lambda * p;
}

inline double objective(const FactorModel& m, std::span<const RatingTriple> triples,
                        double lambda, std::span<const double> weights = {}) {
  return residual_sum(m, triples, weights) + penalty(m, lambda);
}

template <BlockSource Source>
double objective(const FactorModel& m, const Source& source, double lambda,
                 std::span<const double> weights = {}) {
  double s = 0;
  auto reader = source.open();
  while (auto block = reader.next()) s += residual_sum(m, block->triples, weights);
  return s + penalty(m, lambda);
}

// Root mean squared error; predictions optionally clipped to `clip`.
inline double rmse(const FactorModel& m, std::span<const RatingTriple> triples,
                   std::optional<RatingRange> clip = std::nullopt) {
  if (triples.empty()) return 0.0;
  double s = 0;
  for (const auto& t : triples) {
    double p = m.predict(t.user, t.item);
    if (clip) p = std::clamp(p, clip->min, clip->max);
    double e = t.rating - p;
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(triples.size()));
}

// Snapshot layout (little-endian, see docs/FORMATS.md):
//   "DPMFMDL1" | u32 version | u32 flags | u32 k | u32 n_users | u32 n_items
//   [U f32 n_users*k]            if flags & kHasUsers
//   V f32 n_items*k
//   [b_u f32 n_users]            if flags & kHasBiases && flags & kHasUsers
//   [b_m f32 n_items, b_0 f32]   if flags & kHasBiases
//   [user ids i64 n_users]       if flags & kHasUserIds
//   [item ids i64 n_items]       if flags & kHasItemIds
//   u32 crc32 of everything above
struct SnapshotIds {
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
};

namespace snapshot_flags {
constexpr std::uint32_t kHasUsers = 1u << 0;
constexpr std::uint32_t kHasBiases = 1u << 1;
constexpr std::uint32_t kHasUserIds = 1u << 2;
constexpr std::uint32_t kHasItemIds = 1u << 3;
}  // namespace snapshot_flags

namespace detail {
constexpr char kModelMagic[8] = {'D', 'P', 'M', 'F', 'M', 'D', 'L', '1'};

inline void put_f32(ByteWriter& w, const std::vector<double>& v) {
  for (double x : v) w.put(static_cast<float>(x));
}
inline std::vector<double> get_f32(ByteReader& r, std::size_t n) {
  auto f = r.get_all<float>(n);
  return {f.begin(), f.end()};
}
}  // namespace detail

inline std::vector<char> encode_snapshot(const FactorModel& m, bool include_users,
                                         const SnapshotIds& ids = {}) {
  using namespace snapshot_flags;
  std::uint32_t flags = (include_users ? kHasUsers : 0) | (m.biases() ? kHasBiases : 0) |
                        (include_users && !ids.user_ids.empty() ? kHasUserIds : 0) |
                        (!ids.item_ids.empty() ? kHasItemIds : 0);
  detail::ByteWriter w;
  w.put_bytes(detail::kModelMagic, 8);
  w.put(detail::kFormatVersion);
  w.put(flags);
  w.put(static_cast<std::uint32_t>(m.k()));
  w.put(static_cast<std::uint32_t>(m.n_users()));
  w.put(static_cast<std::uint32_t>(m.n_items()));
  if (flags & kHasUsers) detail::put_f32(w, m.user_matrix());
  detail::put_f32(w, m.item_matrix());
  if (flags & kHasBiases) {
    if (flags & kHasUsers)
      for (std::size_t i = 0; i < m.n_users(); ++i) w.put(static_cast<float>(m.user_bias(i)));
    for (std::size_t j = 0; j < m.n_items(); ++j) w.put(static_cast<float>(m.item_bias(j)));
    w.put(static_cast<float>(m.global_bias()));
  }
  if (flags & kHasUserIds) {
    if (ids.user_ids.size() != m.n_users()) throw std::invalid_argument("user id map size");
    w.put_all(ids.user_ids);
  }
  if (flags & kHasItemIds) {
    if (ids.item_ids.size() != m.n_items()) throw std::invalid_argument("item id map size");
    w.put_all(ids.item_ids);
  }
  const auto& bytes = w.bytes();
  w.put(static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0),
                                         reinterpret_cast<const Bytef*>(bytes.data()),
                                         static_cast<uInt>(bytes.size()))));
  return w.bytes();
}

struct Snapshot {
  FactorModel model;  // users are zero when the file carries only V
  bool has_users = false;
  SnapshotIds ids;
};

inline Snapshot decode_snapshot(const std::vector<char>& bytes, const std::string& context) {
  using namespace snapshot_flags;
  if (bytes.size() < 4) throw CorruptFileError(context + ": truncated");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  auto actual = static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0),
                                                 reinterpret_cast<const Bytef*>(bytes.data()),
                                                 static_cast<uInt>(bytes.size() - 4)));
  if (stored != actual) throw CorruptFileError(context + ": checksum mismatch");
  detail::ByteReader r(bytes, context);
  r.expect_magic(detail::kModelMagic);
  if (r.get<std::uint32_t>() != detail::kFormatVersion)
    throw CorruptFileError(context + ": unsupported version");
  auto flags = r.get<std::uint32_t>();
  auto k = r.get<std::uint32_t>();
  auto nu = r.get<std::uint32_t>();
  auto ni = r.get<std::uint32_t>();
  if (k == 0) throw CorruptFileError(context + ": zero latent dimension");
  Snapshot s;
  s.has_users = flags & kHasUsers;
  s.model = FactorModel(nu, ni, k, flags & kHasBiases);
  if (s.has_users) s.model.user_matrix() = detail::get_f32(r, std::size_t{nu} * k);
  s.model.item_matrix() = detail::get_f32(r, std::size_t{ni} * k);
  if (flags & kHasBiases) {
    if (s.has_users)
      for (std::size_t i = 0; i < nu; ++i) s.model.user_bias(i) = r.get<float>();
    for (std::size_t j = 0; j < ni; ++j) s.model.item_bias(j) = r.get<float>();
    s.model.global_bias() = r.get<float>();
  }
  if (flags & kHasUserIds) s.ids.user_ids = r.get_all<std::int64_t>(nu);
  if (flags & kHasItemIds) s.ids.item_ids = r.get_all<std::int64_t>(ni);
  if (r.pos() + 4 != bytes.size()) throw CorruptFileError(context + ": trailing bytes");
  return s;
}

inline void save_snapshot(const std::filesystem::path& path, const FactorModel& m,
                          bool include_users = true, const SnapshotIds& ids = {}) {
  detail::write_file(path, encode_snapshot(m, include_users, ids));
}

inline Snapshot load_snapshot(const std::filesystem::path& path) {
  return decode_snapshot(detail::read_file(path), path.string());
}

}  // namespace dpmf

#endif  // DPMF_MODEL_HPP_
