#include "nbtree/core.hpp"

#include <cstring>

namespace nbtree {

const char* op_name(Op op) {
  switch (op) {
    case Op::Put: return "put";
    case Op::Delete: return "delete";
    case Op::Update: return "update";
  }
  return "?";
}

void CostParams::validate() const {
  if (t_seek <= 0 || t_seq_r <= 0 || t_seq_w <= 0)
    throw std::invalid_argument("cost params must be strictly positive");
}

uint32_t Config::leaf_capacity() const {
  uint64_t usable = page_bytes > 3 ? page_bytes - 3 : 0;
  return static_cast<uint32_t>(usable / record_size());
}

uint32_t Config::max_internal_fanout() const {
  // header (3) + r separators * (key + child id) + one trailing child id
  uint64_t usable = page_bytes > 11 ? page_bytes - 11 : 0;
  uint64_t r = usable / (key_bytes + 8);
  return static_cast<uint32_t>(r + 1);
}

uint32_t Config::internal_fanout() const {
  return dtree_fanout == 0 ? max_internal_fanout() : dtree_fanout;
}

void Config::validate() const {
  if (stree_fanout < 2) throw std::invalid_argument("stree_fanout must be >= 2");
  if (internal_fanout() < 4) throw std::invalid_argument("dtree_fanout must be >= 4");
  if (sigma < 2ull * stree_fanout)
    throw std::invalid_argument("sigma must be >= 2*stree_fanout");
  if (key_bytes == 0 || value_bytes == 0)
    throw std::invalid_argument("key_bytes and value_bytes must be positive");
  if (leaf_capacity() < 1)
    throw std::invalid_argument("page_bytes too small for one record per leaf");
  if (internal_fanout() > max_internal_fanout())
    throw std::invalid_argument("page_bytes too small for one full internal d-node");
  if (bloom_bits_per_key < 1 || bloom_hashes < 1)
    throw std::invalid_argument("bloom parameters must be >= 1");
  cost.validate();
}

bool Config::structural_equal(const Config& o) const {
  return page_bytes == o.page_bytes && dtree_fanout == o.dtree_fanout &&
         stree_fanout == o.stree_fanout && sigma == o.sigma &&
         key_bytes == o.key_bytes && value_bytes == o.value_bytes &&
         bloom_bits_per_key == o.bloom_bits_per_key &&
         bloom_hashes == o.bloom_hashes && mode == o.mode;
}

std::string encode_record(const DeltaRecord& rec, const Config& cfg) {
  if (rec.key.size() != cfg.key_bytes)
    throw CodecError("record key length mismatch");
  bool has_value = rec.op != Op::Delete;
  if (has_value && rec.value.size() != cfg.value_bytes)
    throw CodecError("record value length mismatch");
  if (!has_value && !rec.value.empty())
    throw CodecError("delete record carries a value");

  std::string out;
  out.reserve(cfg.record_size());
  out.push_back(static_cast<char>(rec.op));
  for (int i = 7; i >= 0; --i)
    out.push_back(static_cast<char>((rec.seq >> (8 * i)) & 0xff));
  out.append(rec.key);
  if (has_value)
    out.append(rec.value);
  else
    out.append(cfg.value_bytes, '\0');
  return out;
}

DeltaRecord decode_record(std::string_view bytes, const Config& cfg) {
  if (bytes.size() != cfg.record_size())
    throw CodecError("record encoding length mismatch");
  uint8_t tag = static_cast<uint8_t>(bytes[0]);
  if (tag > 2) throw CodecError("unknown record op tag");

  DeltaRecord rec;
  rec.op = static_cast<Op>(tag);
  rec.seq = 0;
  for (int i = 0; i < 8; ++i)
    rec.seq = (rec.seq << 8) | static_cast<uint8_t>(bytes[1 + i]);
  rec.key.assign(bytes.substr(9, cfg.key_bytes));
  if (rec.op != Op::Delete)
    rec.value.assign(bytes.substr(9 + cfg.key_bytes, cfg.value_bytes));
  return rec;
}

Key key_from_u64(uint64_t v, uint32_t key_bytes) {
  Key k(key_bytes, '\0');
  for (uint32_t i = 0; i < 8 && i < key_bytes; ++i)
    k[key_bytes - 1 - i] = static_cast<char>((v >> (8 * i)) & 0xff);
  return k;
}

uint64_t key_to_u64(const Key& k) {
  uint64_t v = 0;
  size_t n = k.size() < 8 ? k.size() : 8;
  for (size_t i = k.size() - n; i < k.size(); ++i)
    v = (v << 8) | static_cast<uint8_t>(k[i]);
  return v;
}

void OracleMap::apply(const DeltaRecord& rec) {
  switch (rec.op) {
    case Op::Put:
    case Op::Update:
      map_[rec.key] = rec.value;
      break;
    case Op::Delete:
      map_.erase(rec.key);
      break;
  }
}

std::optional<Value> OracleMap::get(const Key& k) const {
  auto it = map_.find(k);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<Key, Value>> OracleMap::range(const KeyRange& r) const {
  std::vector<std::pair<Key, Value>> out;
  for (auto it = map_.lower_bound(r.low); it != map_.end() && it->first <= r.high; ++it)
    out.emplace_back(it->first, it->second);
  return out;
}

}  // namespace nbtree
