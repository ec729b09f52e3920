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
#ifndef DPMF_BLOCK_IO_HPP_
#define DPMF_BLOCK_IO_HPP_

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "dpmf/dataset.hpp"
#include "dpmf/errors.hpp"

namespace dpmf {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and written with memcpy");
static_assert(sizeof(RatingTriple) == 12);

// Everything a trainer needs to know about a blocked dataset without reading
// the ratings themselves.
struct BlockMeta {
  std::uint32_t n_users = 0;
  std::uint32_t n_items = 0;
  std::uint64_t n_triples = 0;
  RatingRange range;
  std::vector<std::uint32_t> tier_cutoffs;
  std::vector<std::uint32_t> user_counts;
  std::vector<std::uint32_t> item_counts;
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
};

inline BlockMeta describe(const RatingDataset& ds, std::vector<std::uint32_t> tier_cutoffs = {}) {
  BlockMeta m;
  m.n_users = static_cast<std::uint32_t>(ds.n_users());
  m.n_items = static_cast<std::uint32_t>(ds.n_items());
  m.n_triples = ds.size();
  m.range = ds.range();
  m.tier_cutoffs = std::move(tier_cutoffs);
  m.user_counts = ds.user_counts();
  m.item_counts = ds.item_counts();
  m.user_ids = ds.user_ids();
  m.item_ids = ds.item_ids();
  return m;
}

struct BlockEntry {
  std::uint64_t offset = 0;
  std::uint64_t byte_length = 0;
  std::uint32_t first_user = 0;
  std::uint32_t user_count = 0;
  std::uint32_t triple_count = 0;
  std::uint32_t checksum = 0;
};

struct BlockIndex {
  BlockMeta meta;
  std::vector<BlockEntry> blocks;
};

inline std::uint32_t triples_checksum(std::span<const RatingTriple> triples) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* bytes = reinterpret_cast<const Bytef*>(triples.data());
  std::size_t remaining = triples.size_bytes();
  while (remaining > 0) {
    uInt chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    crc = crc32(crc, bytes, chunk);
    bytes += chunk;
    remaining -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::filesystem::path blocks_data_path(const std::filesystem::path& base) {
  return std::filesystem::path(base.string() + ".bin");
}
inline std::filesystem::path blocks_index_path(const std::filesystem::path& base) {
  return std::filesystem::path(base.string() + ".idx");
}

namespace detail {

constexpr char kBlockMagic[8] = {'D', 'P', 'M', 'F', 'B', 'L', 'K', '1'};
constexpr char kIndexMagic[8] = {'D', 'P', 'M', 'F', 'I', 'D', 'X', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kBlockHeaderBytes = 16;

class ByteWriter {
 public:
  template <typename T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  template <typename T>
  void put_all(const std::vector<T>& v) {
    const auto* p = reinterpret_cast<const char*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size() * sizeof(T));
  }
  void put_bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& buf, std::string context)
      : buf_(buf), context_(std::move(context)) {}
  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <typename T>
  std::vector<T> get_all(std::size_t n) {
    need(n * sizeof(T));
    std::vector<T> v(n);
    if (n > 0) std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  void expect_magic(const char (&magic)[8]) {
    need(8);
    if (std::memcmp(buf_.data() + pos_, magic, 8) != 0)
      throw CorruptFileError(context_ + ": bad magic");
    pos_ += 8;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw CorruptFileError(context_ + ": truncated");
  }
  const std::vector<char>& buf_;
  std::string context_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<char> encode_index(const BlockIndex& idx) {
  ByteWriter w;
  w.put_bytes(kIndexMagic, 8);
  w.put(kFormatVersion);
  w.put(static_cast<std::uint32_t>(idx.blocks.size()));
  w.put(idx.meta.n_users);
  w.put(idx.meta.n_items);
  w.put(idx.meta.n_triples);
  w.put(idx.meta.range.min);
  w.put(idx.meta.range.max);
  w.put(static_cast<std::uint32_t>(idx.meta.tier_cutoffs.size()));
  w.put_all(idx.meta.tier_cutoffs);
  w.put_all(idx.meta.user_counts);
  w.put_all(idx.meta.item_counts);
  w.put_all(idx.meta.user_ids);
  w.put_all(idx.meta.item_ids);
  for (const auto& b : idx.blocks) {
    w.put(b.offset);
    w.put(b.byte_length);
    w.put(b.first_user);
    w.put(b.user_count);
    w.put(b.triple_count);
    w.put(b.checksum);
  }
  const auto& bytes = w.bytes();
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size())));
  w.put(crc);
  return w.bytes();
}

inline BlockIndex decode_index(const std::vector<char>& bytes, const std::string& context) {
  if (bytes.size() < 4) throw CorruptFileError(context + ": truncated");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  std::uint32_t actual = static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size() - 4)));
  if (stored != actual) throw CorruptFileError(context + ": index checksum mismatch");

  ByteReader r(bytes, context);
  r.expect_magic(kIndexMagic);
  if (r.get<std::uint32_t>() != kFormatVersion)
    throw CorruptFileError(context + ": unsupported version");
  BlockIndex idx;
  auto n_blocks = r.get<std::uint32_t>();
  idx.meta.n_users = r.get<std::uint32_t>();
  idx.meta.n_items = r.get<std::uint32_t>();
  idx.meta.n_triples = r.get<std::uint64_t>();
  idx.meta.range.min = r.get<double>();
  idx.meta.range.max = r.get<double>();
  auto n_cutoffs = r.get<std::uint32_t>();
  idx.meta.tier_cutoffs = r.get_all<std::uint32_t>(n_cutoffs);
  idx.meta.user_counts = r.get_all<std::uint32_t>(idx.meta.n_users);
  idx.meta.item_counts = r.get_all<std::uint32_t>(idx.meta.n_items);
  idx.meta.user_ids = r.get_all<std::int64_t>(idx.meta.n_users);
  idx.meta.item_ids = r.get_all<std::int64_t>(idx.meta.n_items);
  idx.blocks.resize(n_blocks);
  for (auto& b : idx.blocks) {
    b.offset = r.get<std::uint64_t>();
    b.byte_length = r.get<std::uint64_t>();
    b.first_user = r.get<std::uint32_t>();
    b.user_count = r.get<std::uint32_t>();
    b.triple_count = r.get<std::uint32_t>();
    b.checksum = r.get<std::uint32_t>();
  }
  if (r.pos() + 4 != bytes.size()) throw CorruptFileError(context + ": trailing bytes");
  return idx;
}

}  // namespace detail

// Applies the tier plan (item ids become popularity positions) and writes
// <base>.bin plus <base>.idx. The layout is documented in docs/FORMATS.md.
inline BlockIndex write_blocks(const RatingDataset& ds, const TierPlan& plan,
                               std::size_t users_per_block, const std::filesystem::path& base) {
  RatingDataset planned = apply_plan(ds, plan);
  BlockIndex idx;
  idx.meta = describe(planned, plan.cutoffs);

  detail::ByteWriter data;
  data.put_bytes(detail::kBlockMagic, 8);
  data.put(detail::kFormatVersion);
  data.put(std::uint32_t{0});
  for (const auto& block : make_blocks(planned, users_per_block)) {
    BlockEntry e;
    e.offset = data.bytes().size();
    e.first_user = block.first_user;
    e.user_count = block.user_count;
    e.triple_count = static_cast<std::uint32_t>(block.triples.size());
    e.checksum = triples_checksum(block.triples);
    e.byte_length = detail::kBlockHeaderBytes + block.triples.size() * sizeof(RatingTriple);
    data.put(e.first_user);
    data.put(e.user_count);
    data.put(e.triple_count);
    data.put(e.checksum);
    data.put_all(block.triples);
    idx.blocks.push_back(e);
  }
  detail::write_file(blocks_data_path(base), data.bytes());
  detail::write_file(blocks_index_path(base), detail::encode_index(idx));
  return idx;
}

inline BlockIndex read_index(const std::filesystem::path& base) {
  auto path = blocks_index_path(base);
  return detail::decode_index(detail::read_file(path), path.string());
}

// Sequential reader over a block file. Each block is verified against its
// header, the index entry and its checksum.
class BlockReader {
 public:
  explicit BlockReader(const std::filesystem::path& base)
      : BlockReader(base, std::make_shared<const BlockIndex>(read_index(base))) {}

  BlockReader(const std::filesystem::path& base, std::shared_ptr<const BlockIndex> index)
      : index_(std::move(index)), path_(blocks_data_path(base)) {
    in_.open(path_, std::ios::binary);
    if (!in_) throw IoError("cannot open " + path_.string());
    char magic[8];
    std::uint32_t version = 0, reserved = 0;
    in_.read(magic, 8);
    in_.read(reinterpret_cast<char*>(&version), 4);
    in_.read(reinterpret_cast<char*>(&reserved), 4);
    if (!in_ || std::memcmp(magic, detail::kBlockMagic, 8) != 0)
      throw CorruptFileError(path_.string() + ": bad magic");
    if (version != detail::kFormatVersion)
      throw CorruptFileError(path_.string() + ": unsupported version");
  }

  const BlockIndex& index() const { return *index_; }

  // Null once every block has been returned.
  std::shared_ptr<const UserBlock> next() {
    if (next_ >= index_->blocks.size()) return nullptr;
    const BlockEntry& e = index_->blocks[next_];
    std::string where = path_.string() + " block " + std::to_string(next_);
    ++next_;
    in_.seekg(static_cast<std::streamoff>(e.offset));
    std::uint32_t header[4];
    in_.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in_) throw CorruptFileError(where + ": truncated header");
    if (header[0] != e.first_user || header[1] != e.user_count || header[2] != e.triple_count ||
        header[3] != e.checksum)
      throw CorruptFileError(where + ": header disagrees with index");
    auto block = std::make_shared<UserBlock>();
    block->first_user = e.first_user;
    block->user_count = e.user_count;
    block->triples.resize(e.triple_count);
    in_.read(reinterpret_cast<char*>(block->triples.data()),
             static_cast<std::streamsize>(e.triple_count * sizeof(RatingTriple)));
    if (!in_) throw CorruptFileError(where + ": truncated payload");
    if (triples_checksum(block->triples) != e.checksum)
      throw CorruptFileError(where + ": checksum mismatch");
    for (const auto& t : block->triples) {
      if (t.user < e.first_user || t.user >= e.first_user + e.user_count ||
          t.item >= index_->meta.n_items)
        throw CorruptFileError(where + ": triple outside block bounds");
    }
    return block;
  }

 private:
  std::shared_ptr<const BlockIndex> index_;
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t next_ = 0;
};

// A blocked dataset on disk. open() starts a fresh pass.
class BlockFile {
 public:
  explicit BlockFile(std::filesystem::path base)
      : base_(std::move(base)), index_(std::make_shared<const BlockIndex>(read_index(base_))) {}

  const BlockMeta& meta() const { return index_->meta; }
  std::size_t block_count() const { return index_->blocks.size(); }
  BlockReader open() const { return BlockReader(base_, index_); }

 private:
  std::filesystem::path base_;
  std::shared_ptr<const BlockIndex> index_;
};

// Same interface as BlockFile for data that fits in memory.
class InMemoryBlocks {
 public:
  class Reader {
   public:
    explicit Reader(const std::vector<std::shared_ptr<const UserBlock>>& blocks)
        : blocks_(&blocks) {}
    std::shared_ptr<const UserBlock> next() {
      return next_ < blocks_->size() ? (*blocks_)[next_++] : nullptr;
    }

   private:
    const std::vector<std::shared_ptr<const UserBlock>>* blocks_;
    std::size_t next_ = 0;
  };

  // `ds` must already carry plan-ordered item ids when cutoffs are given.
  InMemoryBlocks(const RatingDataset& ds, std::size_t users_per_block,
                 std::vector<std::uint32_t> tier_cutoffs = {})
      : meta_(describe(ds, std::move(tier_cutoffs))) {
    for (auto& b : make_blocks(ds, users_per_block))
      blocks_.push_back(std::make_shared<const UserBlock>(std::move(b)));
  }

  const BlockMeta& meta() const { return meta_; }
  std::size_t block_count() const { return blocks_.size(); }
  Reader open() const { return Reader(blocks_); }

 private:
  BlockMeta meta_;
  std::vector<std::shared_ptr<const UserBlock>> blocks_;
};

template <typename S>
concept BlockSource = requires(const S& s) {
  { s.meta() } -> std::convertible_to<const BlockMeta&>;
  { s.open().next() } -> std::convertible_to<std::shared_ptr<const UserBlock>>;
};

// Reads every block back into a dataset (ids as stored, i.e. plan order).
template <BlockSource Source>
RatingDataset load_dataset(const Source& source) {
  const auto& m = source.meta();
  std::vector<RatingTriple> triples;
  triples.reserve(m.n_triples);
  auto reader = source.open();
  while (auto block = reader.next())
    triples.insert(triples.end(), block->triples.begin(), block->triples.end());
  return RatingDataset::from_triples(m.n_users, m.n_items, std::move(triples), m.range,
                                     m.user_ids, m.item_ids);
}

}  // namespace dpmf

#endif  // DPMF_BLOCK_IO_HPP_
