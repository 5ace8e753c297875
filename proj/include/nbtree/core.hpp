#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nbtree {

// Keys and values are fixed-length byte strings. Lexicographic comparison of
// std::string (unsigned char semantics) is the key order everywhere.
using Key = std::string;
using Value = std::string;

enum class Op : uint8_t { Put = 0, Delete = 1, Update = 2 };

const char* op_name(Op op);

// A delta record is the unit flowing through buffers, merges and flushes.
// Delete and Update are markers resolved against older records during merges.
struct DeltaRecord {
  Key key;
  Op op = Op::Put;
  Value value;  // empty for Delete
  uint64_t seq = 0;

  bool operator==(const DeltaRecord&) const = default;
};

// Inclusive on both ends.
struct KeyRange {
  Key low;
  Key high;

  bool contains(const Key& k) const { return low <= k && k <= high; }
};

enum class Mode : uint8_t { Basic = 0, Advanced = 1 };

// Device model: positioning cost plus per-page sequential transfer costs.
struct CostParams {
  double t_seek = 8.5e-3;
  double t_seq_r = 3.0e-5;
  double t_seq_w = 3.2e-5;

  void validate() const;
};

struct Config {
  uint64_t page_bytes = 4096;
  uint32_t dtree_fanout = 0;  // max children per internal d-node; 0 = largest that fits a page
  uint32_t stree_fanout = 3;  // max children per non-leaf s-node
  uint64_t sigma = 512;       // max records per d-tree, counted in records
  uint32_t key_bytes = 8;
  uint32_t value_bytes = 128;
  uint32_t bloom_bits_per_key = 8;
  uint32_t bloom_hashes = 3;
  Mode mode = Mode::Advanced;
  bool deamortize = false;
  CostParams cost;
  uint64_t memory_budget = 0;  // bytes, 0 = unlimited; consulted by the bench driver only

  // Encoded record size: 1-byte op tag + 8-byte seq + key + value.
  uint32_t record_size() const { return 9 + key_bytes + value_bytes; }
  // Records per leaf d-node page.
  uint32_t leaf_capacity() const;
  // Resolved max children per internal d-node.
  uint32_t internal_fanout() const;
  // Largest internal fanout a page can hold.
  uint32_t max_internal_fanout() const;

  void validate() const;  // throws std::invalid_argument on a bad combination

  bool structural_equal(const Config& other) const;
};

struct CodecError : std::runtime_error {
  explicit CodecError(const std::string& msg) : std::runtime_error(msg) {}
};

// Record wire format: op tag (1 byte) || seq (8 bytes, big-endian) || key || value.
// Delete records carry a zero-filled value field so the encoding length is fixed.
std::string encode_record(const DeltaRecord& rec, const Config& cfg);
DeltaRecord decode_record(std::string_view bytes, const Config& cfg);

// Big-endian u64 <-> Key helpers; big-endian keeps numeric order and byte order aligned.
Key key_from_u64(uint64_t v, uint32_t key_bytes = 8);
uint64_t key_to_u64(const Key& k);

// In-memory reference model. Applies the same resolution the engine promises:
// Put inserts or overwrites, Delete removes, Update overwrites or inserts.
class OracleMap {
 public:
  void apply(const DeltaRecord& rec);
  std::optional<Value> get(const Key& k) const;
  std::vector<std::pair<Key, Value>> range(const KeyRange& r) const;
  size_t size() const { return map_.size(); }
  const std::map<Key, Value>& entries() const { return map_; }

 private:
  std::map<Key, Value> map_;
};

}  // namespace nbtree
