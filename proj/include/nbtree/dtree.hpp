#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "nbtree/bloom.hpp"
#include "nbtree/core.hpp"
#include "nbtree/pager.hpp"

namespace nbtree {

// Pull iterator over delta records in strictly ascending key order.
class SortedStream {
 public:
  virtual ~SortedStream() = default;
  virtual std::optional<DeltaRecord> next() = 0;
};

class VectorStream : public SortedStream {
 public:
  explicit VectorStream(std::vector<DeltaRecord> recs) : recs_(std::move(recs)) {}
  std::optional<DeltaRecord> next() override {
    if (pos_ >= recs_.size()) return std::nullopt;
    return recs_[pos_++];
  }

 private:
  std::vector<DeltaRecord> recs_;
  size_t pos_ = 0;
};

// One-record lookahead over a stream; shared by the slice streams that route a
// parent's records to consecutive child intervals.
class PeekableStream {
 public:
  explicit PeekableStream(std::unique_ptr<SortedStream> inner) : inner_(std::move(inner)) {}
  const DeltaRecord* peek();
  std::optional<DeltaRecord> next();

 private:
  std::unique_ptr<SortedStream> inner_;
  std::optional<DeltaRecord> ahead_;
};

// Yields records from the shared source while their key is below the bound.
class SliceStream : public SortedStream {
 public:
  SliceStream(PeekableStream& src, std::optional<Key> upper_exclusive)
      : src_(src), upper_(std::move(upper_exclusive)) {}
  std::optional<DeltaRecord> next() override;

 private:
  PeekableStream& src_;
  std::optional<Key> upper_;
};

// Caps a stream at n records; the flush path uses the consumption count and
// the underlying stream position to place the lazy-removal bound.
class TakeStream : public SortedStream {
 public:
  TakeStream(std::unique_ptr<SortedStream> inner, uint64_t n)
      : inner_(std::move(inner)), cap_(n) {}
  std::optional<DeltaRecord> next() override {
    if (consumed_ >= cap_) return std::nullopt;
    auto r = inner_->next();
    if (r) ++consumed_;
    return r;
  }
  uint64_t consumed() const { return consumed_; }
  SortedStream* underlying() { return inner_.get(); }

 private:
  std::unique_ptr<SortedStream> inner_;
  uint64_t cap_;
  uint64_t consumed_ = 0;
};

// Yields records from an owned stream strictly below the bound, discarding
// the remainder.
class BelowStream : public SortedStream {
 public:
  BelowStream(std::unique_ptr<SortedStream> inner, Key upper_exclusive)
      : inner_(std::move(inner)), upper_(std::move(upper_exclusive)) {}
  std::optional<DeltaRecord> next() override {
    if (done_) return std::nullopt;
    auto r = inner_->next();
    if (!r || r->key >= upper_) {
      done_ = true;
      return std::nullopt;
    }
    return r;
  }

 private:
  std::unique_ptr<SortedStream> inner_;
  Key upper_;
  bool done_ = false;
};

// Resolution of two records for the same key, `newer` shadowing `older`:
//   Put replaces anything; Delete yields a tombstone that keeps propagating;
//   Update over a value yields Put(new value), over a tombstone re-inserts as
//   Put, and over nothing stays an Update.
DeltaRecord resolve_newer(const DeltaRecord& newer, const DeltaRecord& older);

// Merge-sorts two ascending streams with newer-wins resolution. Both inputs
// are checked for strict ascent lazily. With `leaf_level` set, tombstones are
// dropped and surviving Updates are materialized as Puts, so leaf-level
// d-trees hold only live records.
class MergeStream : public SortedStream {
 public:
  MergeStream(std::unique_ptr<SortedStream> newer, std::unique_ptr<SortedStream> older,
              bool leaf_level = false);
  std::optional<DeltaRecord> next() override;

 private:
  std::optional<DeltaRecord> pull(int side);
  std::optional<DeltaRecord> resolve_once();

  std::unique_ptr<SortedStream> in_[2];  // 0 = newer, 1 = older
  std::optional<DeltaRecord> head_[2];
  std::optional<Key> last_emitted_[2];
  bool leaf_level_;
};

std::unique_ptr<SortedStream> merge_streams(std::unique_ptr<SortedStream> newer,
                                            std::unique_ptr<SortedStream> older,
                                            bool leaf_level = false);

// An immutable on-disk B+-tree in one contiguous extent. Leaves occupy the
// extent prefix in key order; internal nodes follow, root last. No page is
// rewritten after the build. Records below live_start_key are logically dead
// (lazy removal); they are reclaimed when the whole tree is rebuilt.
struct DTree {
  Extent extent{0, 0};
  PageId root_page = 0;
  uint32_t height = 0;  // 0 = empty, 1 = single leaf
  uint64_t leaf_count = 0;
  uint64_t total_records = 0;  // physical records in leaves
  uint64_t live_records = 0;   // records at or after live_start_key
  Key min_key;                 // physical bounds, empty strings when tree is empty
  Key max_key;
  std::optional<Key> live_start_key;
  std::optional<PageId> live_start_page;  // leaf holding live_start_key

  bool empty_live() const { return live_records == 0; }
  Key live_floor() const {
    return live_start_key && *live_start_key > min_key ? *live_start_key : min_key;
  }
};

// Bottom-up bulk loader. Buffers pages in memory, then writes the whole tree
// in one sequential pass; internal nodes are kept full except the rightmost
// node of each level. Writing can be spread over several calls so a staged
// cascade can do a bounded amount of I/O at a time.
class DTreeBuilder {
 public:
  DTreeBuilder(const Config& cfg, Pager& pager);

  void add(const DeltaRecord& rec);  // keys must arrive strictly ascending
  void finish();                     // seals leaves, builds internal levels, allocates the extent

  // Writes up to max_pages pages; returns true when everything is on disk.
  bool write_some(IoStats& stats, uint64_t max_pages);
  bool finished() const { return finished_; }
  bool fully_written() const { return finished_ && written_ == pages_.size(); }

  uint64_t record_count() const { return count_; }
  uint64_t pages_total() const { return pages_.size(); }
  uint64_t pages_pending() const { return pages_.size() - written_; }

  DTree tree() const;  // valid after fully written
  BloomFilter bloom() const;

 private:
  void seal_leaf();

  const Config& cfg_;
  Pager& pager_;
  uint32_t leaf_cap_;
  uint32_t fanout_;

  std::vector<Page> pages_;       // leaves, then internal levels bottom-up
  std::vector<Key> leaf_firsts_;  // first key per leaf
  Page cur_;
  uint32_t cur_count_ = 0;
  uint64_t count_ = 0;
  Key min_key_, max_key_, last_key_;
  std::vector<Hash128> hashes_;

  bool finished_ = false;
  uint64_t leaf_pages_ = 0;
  uint32_t height_ = 0;
  Extent extent_{0, 0};
  uint64_t written_ = 0;
};

struct BuiltDTree {
  DTree tree;
  BloomFilter bloom;
};

// Convenience single-shot build.
BuiltDTree bulk_build(SortedStream& in, Pager& pager, IoStats& stats, const Config& cfg);

// B+-tree point lookup; reads at most `height` pages, none when metadata rules
// the key out (empty tree, dead prefix, outside physical bounds).
std::optional<DeltaRecord> dtree_lookup(const DTree& d, const Key& key, const Pager& pager,
                                        ReadCursor cursor, IoStats& stats, const Config& cfg);

// Scan over one d-tree exposing the leaf currently under the cursor, which
// is where a flush pins the lazy-removal start page.
class DTreeScanHandle : public SortedStream {
 public:
  virtual PageId current_leaf() const = 0;
};

// Live records intersecting `range` (whole live content when absent),
// ascending. Locates the start leaf via one root-to-leaf descent, then reads
// leaves sequentially.
std::unique_ptr<DTreeScanHandle> dtree_scan(const DTree& d, std::optional<KeyRange> range,
                                            const Pager& pager, ReadCursor cursor, IoStats& stats,
                                            const Config& cfg);

// Structural audit of one d-tree: page layout, fanout bounds, leaf ordering,
// record counts. Returns an error description or nullopt when clean.
std::optional<std::string> dtree_audit(const DTree& d, const Pager& pager, const Config& cfg);

// Closed-form page count of a bulk-loaded tree: leaves plus internal levels.
uint64_t dtree_page_budget(uint64_t records, uint32_t leaf_cap, uint32_t fanout);

// The in-memory d-tree of the root s-node: a sorted per-key-collapsed buffer.
class RootBuffer {
 public:
  // Stores or replaces by key, returns the record count for the overflow check.
  size_t insert(const DeltaRecord& rec);

  size_t size() const { return map_.size(); }
  bool empty() const { return map_.empty(); }
  void clear() { map_.clear(); }

  const DeltaRecord* find(const Key& k) const;
  std::vector<DeltaRecord> snapshot() const;  // ascending
  std::unique_ptr<SortedStream> stream() const { return std::make_unique<VectorStream>(snapshot()); }
  const std::map<Key, DeltaRecord>& entries() const { return map_; }

 private:
  std::map<Key, DeltaRecord> map_;
};

}  // namespace nbtree
