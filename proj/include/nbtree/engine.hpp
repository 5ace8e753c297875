#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nbtree/bloom.hpp"
#include "nbtree/core.hpp"
#include "nbtree/dtree.hpp"
#include "nbtree/pager.hpp"

namespace nbtree {

using SNodeId = uint64_t;

// A structural node: routing keys, child links and one d-tree. The root
// s-node's d-tree is the in-memory buffer held by the tree itself.
struct SNode {
  SNodeId id = 0;
  std::vector<Key> s_keys;
  std::vector<SNodeId> children;  // empty for leaf s-nodes
  std::optional<DTree> dtree;     // nullopt only for the root
  BloomFilter bloom;

  bool leaf() const { return children.empty(); }
  uint64_t live() const { return dtree ? dtree->live_records : 0; }
};

struct SplitResult {
  Key median;
  SNodeId left = 0;
  SNodeId right = 0;
};

struct QueryStats {
  uint64_t pages_read = 0;
  uint64_t snodes_visited = 0;
  uint64_t dtrees_searched = 0;  // on-disk d-tree descents actually performed
};

struct ValidateReport {
  bool ok = true;
  std::string detail;  // first violated invariant, with the s-node path
  uint32_t s_height = 0;
  uint32_t max_d_height = 0;
  uint64_t live_records = 0;
  uint64_t snodes = 0;
  uint64_t dtrees = 0;
};

struct SNodeDump {
  SNodeId id = 0;
  uint32_t level = 0;
  bool is_root_buffer = false;
  std::vector<Key> s_keys;
  std::vector<Key> dtree_keys;  // live keys (buffer keys for the root)
  std::optional<Key> live_start_key;
  std::vector<SNodeDump> children;
};

struct ManifestError : std::runtime_error {
  explicit ManifestError(const std::string& m) : std::runtime_error(m) {}
};
struct ConfigMismatch : ManifestError {
  explicit ConfigMismatch(const std::string& m) : ManifestError(m) {}
};

// The NB-tree: a structural B-tree whose nodes carry B+-trees, with buffered
// root insertions, recursive flush/split maintenance, per-d-tree Bloom
// filters, lazy removal and optional deamortization of the cascade work.
// Single writer; mutating calls are externally serialized.
class NBTree {
 public:
  // Opens (or creates) a file-backed index directory holding `manifest` and
  // `pages.dat`. An existing manifest must structurally match `cfg`.
  static std::unique_ptr<NBTree> open(const std::string& dir, const Config& cfg);
  // Opens an existing directory adopting its stored config.
  static std::unique_ptr<NBTree> open_existing(const std::string& dir);
  static std::unique_ptr<NBTree> open_in_memory(const Config& cfg);
  ~NBTree();

  NBTree(const NBTree&) = delete;
  NBTree& operator=(const NBTree&) = delete;

  void insert(const Key& key, const Value& value);
  void update(const Key& key, const Value& value);
  void erase(const Key& key);

  std::optional<Value> point_query(const Key& key);
  std::vector<std::pair<Key, Value>> range_query(const KeyRange& range);

  // Advances any staged cascade by at least the per-insert page quota
  // (insertions call this themselves when deamortization is on). Returns
  // pages of work performed.
  uint64_t deamortize_step();
  void drain();  // completes all staged work
  bool work_staged() const;

  // Drains, then audits every structural invariant. Leaf-minimum bounds are
  // checked only while no delete/update has ever been accepted.
  ValidateReport validate();

  SNodeDump dump(bool with_keys = true);

  // Drains and, for file-backed trees, atomically replaces the manifest.
  void close();

  const Config& config() const;
  IoStats& io();
  Pager& pager();
  const QueryStats& last_query() const;
  uint64_t next_seq() const;
  uint64_t cascades_started() const;
  uint64_t cascades_completed() const;

 private:
  NBTree();
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nbtree
