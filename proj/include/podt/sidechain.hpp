#pragma once

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "podt/types.hpp"

namespace podt {

/// One row of historical experience, as backed up to the side chain after a
/// round. Field order matches the DBP feature vector.
struct ExperienceRecord {
  UserId user_id = 0;
  ChainId chain_id = 0;
  double local_trust = 0.0;    // lt_ij at record time
  double global_trust = 0.0;   // gt_i at record time
  std::uint64_t true_blocks = 0;   // t_i, cumulative over all chains
  std::uint64_t false_blocks = 0;  // f_i, cumulative over all chains
  std::uint64_t chain_length = 0;  // L_j
  std::uint64_t active_users = 0;  // N_j
  double feedback = 1.0;           // F_k for the block this record belongs to

  friend bool operator==(const ExperienceRecord&, const ExperienceRecord&) = default;
};

using Digest = std::array<std::uint8_t, 32>;

struct SideChainBlock {
  std::uint64_t index = 0;
  UserId miner_id = 0;
  ChainId origin_chain = 0;
  Digest prev_hash{};
  std::vector<ExperienceRecord> records;
  Digest hash{};
};

inline std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (std::uint8_t b : d) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  Digest digest() {
    need(32);
    Digest d;
    std::memcpy(d.data(), data_ + pos_, 32);
    pos_ += 32;
    return d;
  }

  bool done() const noexcept { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > size_) throw FormatError("truncated side-chain block");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::size_t kRecordBytes = 4 + 4 + 8 * 7;
inline constexpr std::size_t kBlockHeaderBytes = 8 + 4 + 4 + 32 + 4;

/// Canonical little-endian encoding of (index, header, body), the bytes the
/// block hash is taken over. Layout is documented in docs/FORMATS.md.
inline std::vector<std::uint8_t> serialize_payload(const SideChainBlock& b) {
  std::vector<std::uint8_t> out;
  out.reserve(kBlockHeaderBytes + b.records.size() * kRecordBytes);
  detail::put_u64(out, b.index);
  detail::put_u32(out, b.miner_id);
  detail::put_u32(out, b.origin_chain);
  out.insert(out.end(), b.prev_hash.begin(), b.prev_hash.end());
  detail::put_u32(out, static_cast<std::uint32_t>(b.records.size()));
  for (const ExperienceRecord& r : b.records) {
    detail::put_u32(out, r.user_id);
    detail::put_u32(out, r.chain_id);
    detail::put_f64(out, r.local_trust);
    detail::put_f64(out, r.global_trust);
    detail::put_u64(out, r.true_blocks);
    detail::put_u64(out, r.false_blocks);
    detail::put_u64(out, r.chain_length);
    detail::put_u64(out, r.active_users);
    detail::put_f64(out, r.feedback);
  }
  return out;
}

inline Digest sha256(const std::uint8_t* data, std::size_t size) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(data, size, d.data(), &len, EVP_sha256(), nullptr) != 1 || len != d.size()) {
    throw Error("SHA-256 digest failed");
  }
  return d;
}

inline Digest compute_hash(const SideChainBlock& b) {
  const std::vector<std::uint8_t> payload = serialize_payload(b);
  return sha256(payload.data(), payload.size());
}

/// Append-only, hash-linked store of experience records shared by all chains.
///
/// Each block carries the submitting miner and the chain the records came
/// from in its header. Lookups go through an index derived from the blocks,
/// which load() rebuilds.
class SideChain {
 public:
  static constexpr std::size_t kDefaultCapacity = 1u << 20;  // 1 MB
  static constexpr std::array<char, 8> kMagic = {'P', 'O', 'D', 'T', 'S', 'C', '0', '1'};

  explicit SideChain(std::size_t chains, double theta,
                     std::size_t block_capacity_bytes = kDefaultCapacity)
      : chains_(chains), theta_(theta), capacity_(block_capacity_bytes) {}

  /// Appends one block. `is_trusted(miner_id)` gates who may write.
  template <class IsTrusted>
  const SideChainBlock& append_block(std::vector<ExperienceRecord> records, UserId miner_id,
                                     ChainId origin_chain, IsTrusted&& is_trusted) {
    if (!is_trusted(miner_id)) {
      throw AuthorizationError("miner " + std::to_string(miner_id) +
                               " is not a trusted miner and may not extend the side chain");
    }
    SideChainBlock b;
    b.index = blocks_.size();
    b.miner_id = miner_id;
    b.origin_chain = origin_chain;
    if (!blocks_.empty()) b.prev_hash = blocks_.back().hash;
    b.records = std::move(records);
    const std::vector<std::uint8_t> payload = serialize_payload(b);
    if (payload.size() + b.hash.size() > capacity_) {
      throw CapacityError("side-chain block of " + std::to_string(payload.size()) +
                          " bytes exceeds capacity " + std::to_string(capacity_));
    }
    b.hash = sha256(payload.data(), payload.size());
    blocks_.push_back(std::move(b));
    index_block(blocks_.size() - 1);
    return blocks_.back();
  }

  std::size_t size() const noexcept { return blocks_.size(); }
  bool empty() const noexcept { return blocks_.empty(); }
  const SideChainBlock& block(std::size_t i) const { return blocks_.at(i); }
  const std::vector<SideChainBlock>& blocks() const noexcept { return blocks_; }
  std::size_t chains() const noexcept { return chains_; }
  double theta() const noexcept { return theta_; }

  Digest tip_hash() const { return blocks_.empty() ? Digest{} : blocks_.back().hash; }

  struct LatestTrust {
    std::vector<double> local;
    double global = 0.0;
  };

  /// Most recent (lt per chain, gt) for a user. Chains without a record fall
  /// back to theta, as does gt for a user with no records at all.
  LatestTrust latest_trust(UserId user) const {
    LatestTrust out{std::vector<double>(chains_, theta_), theta_};
    for (std::size_t j = 0; j < chains_; ++j) {
      if (const ExperienceRecord* r = latest_record(user, static_cast<ChainId>(j))) {
        out.local[j] = r->local_trust;
      }
    }
    if (auto it = last_of_user_.find(user); it != last_of_user_.end()) {
      out.global = at(it->second).global_trust;
    }
    return out;
  }

  const ExperienceRecord* latest_record(UserId user, ChainId chain) const {
    auto it = by_pair_.find(pair_key(user, chain));
    if (it == by_pair_.end() || it->second.empty()) return nullptr;
    return &at(it->second.back());
  }

  /// The most recent `window` records for (user, chain), oldest first.
  std::vector<ExperienceRecord> query_history(UserId user, ChainId chain,
                                              std::size_t window) const {
    if (window == 0) throw ConfigError("history window must be at least 1");
    std::vector<ExperienceRecord> out;
    auto it = by_pair_.find(pair_key(user, chain));
    if (it == by_pair_.end()) return out;
    const auto& locs = it->second;
    const std::size_t first = locs.size() > window ? locs.size() - window : 0;
    out.reserve(locs.size() - first);
    for (std::size_t k = first; k < locs.size(); ++k) out.push_back(at(locs[k]));
    return out;
  }

  /// True iff every stored hash recomputes and every prev_hash link matches.
  bool verify_chain() const {
    Digest expected_prev{};
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const SideChainBlock& b = blocks_[i];
      if (b.index != i || b.prev_hash != expected_prev) return false;
      if (compute_hash(b) != b.hash) return false;
      expected_prev = b.hash;
    }
    return true;
  }

  /// Binary persistence: 8-byte magic, then per block a u32 payload length
  /// followed by the payload and its 32-byte hash.
  void save(std::ostream& os) const {
    os.write(kMagic.data(), kMagic.size());
    for (const SideChainBlock& b : blocks_) {
      const std::vector<std::uint8_t> payload = serialize_payload(b);
      std::vector<std::uint8_t> len;
      detail::put_u32(len, static_cast<std::uint32_t>(payload.size()));
      os.write(reinterpret_cast<const char*>(len.data()), 4);
      os.write(reinterpret_cast<const char*>(payload.data()),
               static_cast<std::streamsize>(payload.size()));
      os.write(reinterpret_cast<const char*>(b.hash.data()), 32);
    }
  }

  /// Reads a store written by save(). Hashes are loaded as stored, not
  /// recomputed; call verify_chain() to check integrity.
  static SideChain load(std::istream& is, std::size_t chains, double theta,
                        std::size_t block_capacity_bytes = kDefaultCapacity) {
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is),
                                    std::istreambuf_iterator<char>()};
    if (bytes.size() < kMagic.size() ||
        std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
      throw FormatError("not a side-chain file (bad magic)");
    }
    SideChain sc(chains, theta, block_capacity_bytes);
    std::size_t pos = kMagic.size();
    while (pos < bytes.size()) {
      detail::Reader len_reader(bytes.data() + pos, bytes.size() - pos);
      const std::uint32_t len = len_reader.u32();
      pos += 4;
      if (pos + len + 32 > bytes.size()) throw FormatError("truncated side-chain block");
      detail::Reader r(bytes.data() + pos, len);
      SideChainBlock b;
      b.index = r.u64();
      b.miner_id = r.u32();
      b.origin_chain = r.u32();
      b.prev_hash = r.digest();
      const std::uint32_t count = r.u32();
      if (static_cast<std::size_t>(count) * kRecordBytes != len - kBlockHeaderBytes) {
        throw FormatError("record count does not match block length");
      }
      b.records.resize(count);
      for (ExperienceRecord& rec : b.records) {
        rec.user_id = r.u32();
        rec.chain_id = r.u32();
        rec.local_trust = r.f64();
        rec.global_trust = r.f64();
        rec.true_blocks = r.u64();
        rec.false_blocks = r.u64();
        rec.chain_length = r.u64();
        rec.active_users = r.u64();
        rec.feedback = r.f64();
      }
      pos += len;
      detail::Reader h(bytes.data() + pos, 32);
      b.hash = h.digest();
      pos += 32;
      sc.blocks_.push_back(std::move(b));
      sc.index_block(sc.blocks_.size() - 1);
    }
    return sc;
  }

  /// One JSON object per record, using the historical-experience field names.
  void export_jsonl(std::ostream& os) const {
    for (const SideChainBlock& b : blocks_) {
      for (const ExperienceRecord& r : b.records) {
        nlohmann::ordered_json j;
        j["block"] = b.index;
        j["miner_id"] = b.miner_id;
        j["user_id"] = r.user_id;
        j["chain_id"] = r.chain_id;
        j["lt_ij"] = r.local_trust;
        j["gt_i"] = r.global_trust;
        j["t_i"] = r.true_blocks;
        j["f_i"] = r.false_blocks;
        j["L_j"] = r.chain_length;
        j["N_j"] = r.active_users;
        j["F_k"] = r.feedback;
        os << j.dump() << '\n';
      }
    }
  }

 private:
  struct Location {
    std::uint32_t block;
    std::uint32_t record;
  };

  static std::uint64_t pair_key(UserId user, ChainId chain) noexcept {
    return (static_cast<std::uint64_t>(user) << 32) | chain;
  }

  const ExperienceRecord& at(Location loc) const { return blocks_[loc.block].records[loc.record]; }

  void index_block(std::size_t bi) {
    const SideChainBlock& b = blocks_[bi];
    for (std::size_t k = 0; k < b.records.size(); ++k) {
      const ExperienceRecord& r = b.records[k];
      const Location loc{static_cast<std::uint32_t>(bi), static_cast<std::uint32_t>(k)};
      by_pair_[pair_key(r.user_id, r.chain_id)].push_back(loc);
      last_of_user_[r.user_id] = loc;
    }
  }

  std::size_t chains_;
  double theta_;
  std::size_t capacity_;
  std::vector<SideChainBlock> blocks_;
  std::unordered_map<std::uint64_t, std::vector<Location>> by_pair_;
  std::unordered_map<UserId, Location> last_of_user_;
};

}  // namespace podt
