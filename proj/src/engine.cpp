#include "nbtree/engine.hpp"

#include <algorithm>
#include <cassert>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <unordered_map>

#include <fcntl.h>
#include <unistd.h>

namespace nbtree {

namespace {

constexpr uint64_t kWriteChunk = 2;      // pages per staged write step
constexpr uint64_t kMedianChunk = 64;    // records per staged median-scan step
constexpr char kMagic[4] = {'N', 'B', 'T', '1'};
constexpr uint32_t kVersion = 1;

// Pulls from a stream owned elsewhere (the flush keeps ownership of the
// parent scan while the basic-mode rewrite consumes its tail).
class RefStream : public SortedStream {
 public:
  explicit RefStream(SortedStream* s) : s_(s) {}
  std::optional<DeltaRecord> next() override { return s_->next(); }

 private:
  SortedStream* s_;
};

size_t route_skeys(const std::vector<Key>& s_keys, const Key& key) {
  return static_cast<size_t>(std::upper_bound(s_keys.begin(), s_keys.end(), key) -
                             s_keys.begin());
}

struct ByteWriter {
  std::string buf;

  void u8(uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u16(uint16_t v) { for (int i = 0; i < 2; ++i) u8((v >> (8 * i)) & 0xff); }
  void u32(uint32_t v) { for (int i = 0; i < 4; ++i) u8((v >> (8 * i)) & 0xff); }
  void u64(uint64_t v) { for (int i = 0; i < 8; ++i) u8((v >> (8 * i)) & 0xff); }
  void f64(double v) { uint64_t bits; std::memcpy(&bits, &v, 8); u64(bits); }
  void bytes(std::string_view s) { buf.append(s); }
  void sized(std::string_view s) { u32(static_cast<uint32_t>(s.size())); bytes(s); }
};

struct ByteReader {
  std::string_view v;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > v.size()) throw ManifestError("manifest truncated");
  }
  uint8_t u8() { need(1); return static_cast<uint8_t>(v[pos++]); }
  uint16_t u16() { uint16_t r = 0; for (int i = 0; i < 2; ++i) r |= uint16_t(u8()) << (8 * i); return r; }
  uint32_t u32() { uint32_t r = 0; for (int i = 0; i < 4; ++i) r |= uint32_t(u8()) << (8 * i); return r; }
  uint64_t u64() { uint64_t r = 0; for (int i = 0; i < 8; ++i) r |= uint64_t(u8()) << (8 * i); return r; }
  double f64() { uint64_t bits = u64(); double d; std::memcpy(&d, &bits, 8); return d; }
  std::string bytes(size_t n) { need(n); std::string s(v.substr(pos, n)); pos += n; return s; }
  std::string sized() { uint32_t n = u32(); return bytes(n); }
};

}  // namespace

struct NBTree::Impl {
  Config cfg;
  std::string dir;  // empty when in-memory
  std::unique_ptr<Pager> pager;
  IoStats io;
  QueryStats last_query;

  uint64_t next_seq = 1;
  SNodeId next_id = 1;
  SNodeId root_id = 0;
  std::unordered_map<SNodeId, SNode> nodes;
  RootBuffer active;
  bool saw_tombstones = false;

  // ---- staged cascade ----------------------------------------------------

  // One d-tree rebuild, advanced one leaf (production) or a few pages
  // (writing) at a time.
  struct BuildTask {
    std::unique_ptr<SortedStream> input;
    std::optional<DTreeBuilder> builder;
    bool producing = true;

    void init(const Config& cfg, Pager& pager, std::unique_ptr<SortedStream> in) {
      input = std::move(in);
      builder.emplace(cfg, pager);
      producing = true;
    }
    bool step(IoStats& io) {
      if (producing) {
        uint64_t before = builder->pages_total();
        while (builder->pages_total() == before) {
          auto rec = input->next();
          if (!rec) {
            builder->finish();
            producing = false;
            return builder->fully_written();
          }
          builder->add(*rec);
        }
        return false;
      }
      return builder->write_some(io, kWriteChunk);
    }
  };

  struct SplitTask {
    SNodeId node_id = 0;
    bool node_is_leaf = false;
    bool from_frozen = false;   // input records come from the frozen root buffer
    uint64_t frozen_from = 0;   // index of the first record to split

    enum class St { Median, SmallInit, SmallStep, LargeInit, LargeStep, Commit } st = St::Median;
    std::unique_ptr<SortedStream> median_scan;
    uint64_t median_left = 0;  // records still to pull before the median
    Key median;
    BuildTask build;
    DTree small_tree;
    BloomFilter small_bloom;
    SplitResult out;
  };

  struct Frame {
    SNodeId node_id = 0;
    enum class St {
      Init, FlushChild, FlushStep, FlushDone, ParentRewrite,
      LeafSplits, Recurse, SelfCheck, SelfSplit
    } st = St::Init;

    std::unique_ptr<PeekableStream> routed;  // owns capped scan, which owns the live scan
    TakeStream* capped = nullptr;
    DTreeScanHandle* scan = nullptr;  // null when the parent is the frozen buffer
    size_t child_i = 0;
    std::optional<BuildTask> build;
    std::optional<BuildTask> rewrite;

    std::vector<SNodeId> leaf_splits;
    size_t split_i = 0;
    std::optional<SplitTask> split;

    std::vector<SNodeId> recurse_ids;
    size_t rec_i = 0;
    bool awaiting_child = false;
  };

  struct Bubbled {
    SplitResult result;
    SNodeId old_id = 0;
  };

  struct Cascade {
    std::vector<DeltaRecord> frozen;  // overflowed root buffer, ascending
    uint64_t frozen_moved = 0;
    bool root_split = false;
    std::vector<std::unique_ptr<Frame>> stack;
    std::optional<Bubbled> bubbled;
    uint64_t w_estimate = 0;
  };

  std::unique_ptr<Cascade> staged;
  uint64_t quota = 1;
  int64_t credit = 0;
  uint64_t cascades_started = 0;
  uint64_t cascades_completed = 0;

  // ---- helpers -------------------------------------------------------------

  SNode& node(SNodeId id) { return nodes.at(id); }

  uint32_t tree_height() const {
    uint32_t h = 1;
    SNodeId cur = root_id;
    while (!nodes.at(cur).children.empty()) {
      cur = nodes.at(cur).children.front();
      ++h;
    }
    return h;
  }

  uint64_t pages_moved() const { return io.seq_read_pages + io.seq_write_pages; }

  const DeltaRecord* frozen_find(const Key& key) const {
    if (!staged) return nullptr;
    const auto& fz = staged->frozen;
    auto it = std::lower_bound(fz.begin(), fz.end(), key,
                               [](const DeltaRecord& r, const Key& k) { return r.key < k; });
    if (it == fz.end() || it->key != key) return nullptr;
    return &*it;
  }

  // ---- cascade lifecycle ----------------------------------------------------

  uint64_t estimate_cascade_pages() const {
    uint64_t cap = cfg.leaf_capacity();
    uint64_t f = cfg.stree_fanout;
    // Per level: read and rewrite every child plus the moved records, plus
    // split rebuilds and internal-page slack. Deliberately generous.
    uint64_t per_level = 3 * ((f * (cfg.sigma + 1) + 2 * cfg.sigma) / cap + f + 4);
    return (tree_height() + 1) * per_level;
  }

  void stage_cascade() {
    assert(!staged);
    cascades_started++;
    staged = std::make_unique<Cascade>();
    staged->frozen = active.snapshot();
    active.clear();
    staged->w_estimate = estimate_cascade_pages();
    quota = std::max<uint64_t>(1, (staged->w_estimate + cfg.sigma - 1) / cfg.sigma);
    credit = 0;
    auto fr = std::make_unique<Frame>();
    fr->node_id = root_id;
    staged->stack.push_back(std::move(fr));
  }

  bool frame_is_root(const Frame& fr) const {
    return !staged->stack.empty() && staged->stack.front().get() == &fr;
  }

  std::unique_ptr<SortedStream> frozen_slice(uint64_t from, std::optional<Key> lo,
                                             std::optional<Key> hi_exclusive) const {
    std::vector<DeltaRecord> out;
    for (uint64_t i = from; i < staged->frozen.size(); ++i) {
      const DeltaRecord& r = staged->frozen[i];
      if (lo && r.key < *lo) continue;
      if (hi_exclusive && r.key >= *hi_exclusive) break;
      out.push_back(r);
    }
    return std::make_unique<VectorStream>(std::move(out));
  }

  SplitTask make_split_task(const SNode& n, bool from_frozen, uint64_t frozen_from) {
    SplitTask t;
    t.node_id = n.id;
    t.node_is_leaf = n.leaf();
    t.from_frozen = from_frozen;
    t.frozen_from = frozen_from;
    if (!t.node_is_leaf) {
      // median s-key, element floor(r/2) of the sorted s-keys
      t.median = n.s_keys[n.s_keys.size() / 2];
      t.st = SplitTask::St::SmallInit;
    } else if (from_frozen) {
      uint64_t m = staged->frozen.size() - frozen_from;
      t.median = staged->frozen[frozen_from + m / 2].key;
      t.st = SplitTask::St::SmallInit;
    } else {
      uint64_t m = n.dtree->live_records;
      t.median_left = m / 2 + 1;
      t.median_scan = dtree_scan(*n.dtree, std::nullopt, *pager, ReadCursor::A, io, cfg);
      t.st = SplitTask::St::Median;
    }
    return t;
  }

  std::unique_ptr<SortedStream> split_source(const SplitTask& t, bool small_half) {
    const SNode& n = node(t.node_id);
    std::optional<Key> lo = small_half ? std::optional<Key>() : std::optional<Key>(t.median);
    std::optional<Key> hi = small_half ? std::optional<Key>(t.median) : std::optional<Key>();
    std::unique_ptr<SortedStream> src;
    if (t.from_frozen) {
      src = frozen_slice(t.frozen_from, lo, hi);
    } else if (!n.dtree || n.dtree->empty_live()) {
      src = std::make_unique<VectorStream>(std::vector<DeltaRecord>{});
    } else {
      std::optional<KeyRange> range;
      if (lo) range = KeyRange{*lo, n.dtree->max_key};
      auto scan = dtree_scan(*n.dtree, range, *pager, ReadCursor::A, io, cfg);
      if (hi) {
        src = std::make_unique<BelowStream>(std::move(scan), *hi);
      } else {
        src = std::move(scan);
      }
    }
    if (t.node_is_leaf)  // leaf halves hold only live records
      src = merge_streams(std::move(src),
                          std::make_unique<VectorStream>(std::vector<DeltaRecord>{}), true);
    return src;
  }

  // One micro unit of a split task; true when the split committed.
  bool split_step(SplitTask& t) {
    switch (t.st) {
      case SplitTask::St::Median: {
        uint64_t chunk = std::min<uint64_t>(kMedianChunk, t.median_left);
        for (uint64_t i = 0; i < chunk; ++i) {
          auto rec = t.median_scan->next();
          if (!rec) throw std::logic_error("snode_split: live count shorter than median index");
          t.median = rec->key;
          --t.median_left;
        }
        if (t.median_left == 0) {
          t.median_scan.reset();
          t.st = SplitTask::St::SmallInit;
        }
        return false;
      }
      case SplitTask::St::SmallInit:
        t.build.init(cfg, *pager, split_source(t, true));
        t.st = SplitTask::St::SmallStep;
        return false;
      case SplitTask::St::SmallStep:
        if (t.build.step(io)) {
          t.small_tree = t.build.builder->tree();
          t.small_bloom = t.build.builder->bloom();
          t.st = SplitTask::St::LargeInit;
        }
        return false;
      case SplitTask::St::LargeInit:
        t.build.init(cfg, *pager, split_source(t, false));
        t.st = SplitTask::St::LargeStep;
        return false;
      case SplitTask::St::LargeStep:
        if (t.build.step(io)) t.st = SplitTask::St::Commit;
        return false;
      case SplitTask::St::Commit: {
        SNode old = std::move(node(t.node_id));
        SNode left, right;
        left.id = next_id++;
        right.id = next_id++;
        if (!t.node_is_leaf) {
          size_t m = old.s_keys.size() / 2;
          left.s_keys.assign(old.s_keys.begin(), old.s_keys.begin() + m);
          left.children.assign(old.children.begin(), old.children.begin() + m + 1);
          right.s_keys.assign(old.s_keys.begin() + m + 1, old.s_keys.end());
          right.children.assign(old.children.begin() + m + 1, old.children.end());
        }
        left.dtree = t.small_tree;
        left.bloom = t.small_bloom;
        right.dtree = t.build.builder->tree();
        right.bloom = t.build.builder->bloom();
        if (old.dtree && old.dtree->extent.length > 0) pager->free_extent(old.dtree->extent);
        nodes.erase(t.node_id);
        nodes.emplace(left.id, std::move(left));
        SNodeId rid = right.id;
        nodes.emplace(rid, std::move(right));
        t.out = SplitResult{t.median, left.id, rid};
        return true;
      }
    }
    return false;
  }

  void insert_split_into(SNode& parent, SNodeId old_child, const SplitResult& r) {
    auto it = std::find(parent.children.begin(), parent.children.end(), old_child);
    if (it == parent.children.end())
      throw std::logic_error("split insertion: child not found in parent");
    size_t pos = static_cast<size_t>(it - parent.children.begin());
    parent.children[pos] = r.left;
    parent.children.insert(parent.children.begin() + pos + 1, r.right);
    parent.s_keys.insert(parent.s_keys.begin() + pos, r.median);
  }

  void commit_child_rebuild(SNodeId child_id, BuildTask& b) {
    SNode& ch = node(child_id);
    if (ch.dtree && ch.dtree->extent.length > 0) pager->free_extent(ch.dtree->extent);
    ch.dtree = b.builder->tree();
    ch.bloom = b.builder->bloom();
  }

  void compute_followups(Frame& fr, SNode& n) {
    fr.leaf_splits.clear();
    fr.recurse_ids.clear();
    std::vector<SNodeId> over_nonleaf;
    for (SNodeId cid : n.children) {
      SNode& ch = node(cid);
      if (ch.live() <= cfg.sigma) continue;
      if (ch.leaf())
        fr.leaf_splits.push_back(cid);
      else
        over_nonleaf.push_back(cid);
    }
    if (cfg.mode == Mode::Basic) {
      fr.recurse_ids = std::move(over_nonleaf);
    } else if (!over_nonleaf.empty()) {
      // one recursive call, into the child holding the most live records
      SNodeId best = over_nonleaf.front();
      for (SNodeId cid : over_nonleaf)
        if (node(cid).live() > node(best).live()) best = cid;
      fr.recurse_ids = {best};
    }
  }

  void pop_frame(std::optional<SplitResult> result) {
    Cascade& c = *staged;
    SNodeId finished = c.stack.back()->node_id;
    bool was_root = c.stack.size() == 1;
    c.stack.pop_back();
    if (!result) return;
    if (was_root) {
      SNode new_root;
      new_root.id = next_id++;
      new_root.s_keys = {result->median};
      new_root.children = {result->left, result->right};
      SNodeId nid = new_root.id;
      nodes.emplace(nid, std::move(new_root));
      root_id = nid;
      c.root_split = true;
    } else {
      c.bubbled = Bubbled{*result, finished};
    }
  }

  // One micro unit of cascade work. Returns true when the cascade finished.
  bool cascade_step() {
    Cascade& c = *staged;
    if (c.stack.empty()) {
      finish_cascade();
      return true;
    }
    Frame& fr = *c.stack.back();
    SNode& n = node(fr.node_id);
    using St = Frame::St;
    switch (fr.st) {
      case St::Init: {
        if (n.leaf()) {
          // only the root frame can sit on a leaf s-node; split it wholesale
          fr.split.emplace(make_split_task(n, true, 0));
          fr.st = St::SelfSplit;
          return false;
        }
        std::unique_ptr<SortedStream> live;
        if (frame_is_root(fr)) {
          live = std::make_unique<VectorStream>(c.frozen);
        } else {
          auto scan = dtree_scan(*n.dtree, std::nullopt, *pager, ReadCursor::A, io, cfg);
          fr.scan = scan.get();
          live = std::move(scan);
        }
        auto capped = std::make_unique<TakeStream>(std::move(live), cfg.sigma);
        fr.capped = capped.get();
        fr.routed = std::make_unique<PeekableStream>(std::move(capped));
        fr.child_i = 0;
        fr.st = St::FlushChild;
        return false;
      }
      case St::FlushChild: {
        if (fr.child_i >= n.children.size()) {
          fr.st = St::FlushDone;
          return false;
        }
        SNode& ch = node(n.children[fr.child_i]);
        std::optional<Key> upper = fr.child_i < n.s_keys.size()
                                       ? std::optional<Key>(n.s_keys[fr.child_i])
                                       : std::nullopt;
        const DeltaRecord* head = fr.routed->peek();
        bool has_slice = head && (!upper || head->key < *upper);
        bool has_dead = ch.dtree && ch.dtree->live_records != ch.dtree->total_records;
        if (!has_slice && !has_dead) {  // nothing to move, nothing to reclaim
          ++fr.child_i;
          return false;
        }
        auto slice = std::make_unique<SliceStream>(*fr.routed, upper);
        std::unique_ptr<SortedStream> older;
        if (ch.dtree && !ch.dtree->empty_live())
          older = dtree_scan(*ch.dtree, std::nullopt, *pager, ReadCursor::B, io, cfg);
        else
          older = std::make_unique<VectorStream>(std::vector<DeltaRecord>{});
        fr.build.emplace();
        fr.build->init(cfg, *pager,
                       merge_streams(std::move(slice), std::move(older), ch.leaf()));
        fr.st = St::FlushStep;
        return false;
      }
      case St::FlushStep: {
        if (fr.build->step(io)) {
          commit_child_rebuild(n.children[fr.child_i], *fr.build);
          fr.build.reset();
          ++fr.child_i;
          fr.st = St::FlushChild;
        }
        return false;
      }
      case St::FlushDone: {
        if (frame_is_root(fr)) {
          c.frozen_moved = fr.capped->consumed();
        } else if (cfg.mode == Mode::Advanced) {
          // lazy removal: advance the live bound past the moved prefix
          uint64_t moved = fr.capped->consumed();
          DTree d = *n.dtree;
          if (moved >= d.live_records) {
            if (d.extent.length > 0) pager->free_extent(d.extent);
            n.dtree = DTree{};
            n.bloom = BloomFilter{};
          } else {
            auto first_unmoved = fr.capped->underlying()->next();
            if (!first_unmoved) {
              if (d.extent.length > 0) pager->free_extent(d.extent);
              n.dtree = DTree{};
              n.bloom = BloomFilter{};
            } else {
              d.live_start_key = first_unmoved->key;
              d.live_start_page = fr.scan->current_leaf();
              d.live_records -= moved;
              n.dtree = d;  // Bloom filter kept until the next rebuild
            }
          }
        } else {
          // basic mode rewrites the parent from the first unmoved record on
          fr.rewrite.emplace();
          fr.rewrite->init(cfg, *pager,
                           std::make_unique<RefStream>(fr.capped->underlying()));
          fr.st = St::ParentRewrite;
          return false;
        }
        fr.routed.reset();
        fr.capped = nullptr;
        fr.scan = nullptr;
        compute_followups(fr, n);
        fr.st = St::LeafSplits;
        return false;
      }
      case St::ParentRewrite: {
        if (fr.rewrite->step(io)) {
          if (n.dtree && n.dtree->extent.length > 0) pager->free_extent(n.dtree->extent);
          n.dtree = fr.rewrite->builder->tree();
          n.bloom = fr.rewrite->builder->bloom();
          fr.rewrite.reset();
          fr.routed.reset();
          fr.capped = nullptr;
          fr.scan = nullptr;
          compute_followups(fr, n);
          fr.st = St::LeafSplits;
        }
        return false;
      }
      case St::LeafSplits: {
        if (fr.split) {
          if (split_step(*fr.split)) {
            insert_split_into(n, fr.leaf_splits[fr.split_i], fr.split->out);
            fr.split.reset();
            ++fr.split_i;
          }
          return false;
        }
        if (fr.split_i >= fr.leaf_splits.size()) {
          fr.st = St::Recurse;
          return false;
        }
        fr.split.emplace(make_split_task(node(fr.leaf_splits[fr.split_i]), false, 0));
        return false;
      }
      case St::Recurse: {
        if (fr.awaiting_child) {
          fr.awaiting_child = false;
          if (c.bubbled) {
            insert_split_into(n, c.bubbled->old_id, c.bubbled->result);
            c.bubbled.reset();
          }
          ++fr.rec_i;
          return false;
        }
        if (fr.rec_i >= fr.recurse_ids.size()) {
          fr.st = St::SelfCheck;
          return false;
        }
        fr.awaiting_child = true;
        auto child_fr = std::make_unique<Frame>();
        child_fr->node_id = fr.recurse_ids[fr.rec_i];
        c.stack.push_back(std::move(child_fr));
        return false;
      }
      case St::SelfCheck: {
        if (n.children.size() > cfg.stree_fanout) {
          // the root's d-tree is the frozen buffer; its unmoved suffix is what
          // materializes into the halves
          fr.split.emplace(make_split_task(n, frame_is_root(fr), c.frozen_moved));
          fr.st = St::SelfSplit;
        } else {
          pop_frame(std::nullopt);
        }
        return false;
      }
      case St::SelfSplit: {
        if (split_step(*fr.split)) {
          SplitResult r = fr.split->out;
          fr.split.reset();
          pop_frame(r);
        }
        return false;
      }
    }
    return false;
  }

  void finish_cascade() {
    Cascade& c = *staged;
    if (!c.root_split) {
      // suffix the root flush could not move merges back into the live buffer
      for (uint64_t i = c.frozen_moved; i < c.frozen.size(); ++i) {
        const DeltaRecord& left = c.frozen[i];
        if (const DeltaRecord* cur = active.find(left.key)) {
          if (cur->seq <= left.seq)
            throw std::logic_error("cascade merge-back: active record is stale");
          continue;  // a newer record arrived while the cascade was staged
        }
        active.insert(left);
      }
    }
    staged.reset();
    cascades_completed++;
    if (active.size() > cfg.sigma) stage_cascade();
  }

  uint64_t pump(bool unlimited) {
    if (!staged) return 0;
    uint64_t before = pages_moved();
    // cap the carried credit so seek-limited early exits cannot pile work
    // onto one later insertion; the estimate's slack covers the lost budget
    if (!unlimited)
      credit = std::min<int64_t>(credit + static_cast<int64_t>(quota),
                                 2 * static_cast<int64_t>(quota));
    while (staged && (unlimited || credit > 0)) {
      uint64_t p0 = pages_moved();
      uint64_t s0 = io.seeks;
      cascade_step();
      credit -= static_cast<int64_t>(pages_moved() - p0);
      if (!unlimited && io.seeks > s0) break;  // at most one positioning cost per insert
    }
    return pages_moved() - before;
  }

  void drain_all() {
    while (staged) pump(true);
  }

  // ---- operations ----------------------------------------------------------

  void apply(Op op, const Key& key, const Value& value) {
    if (key.size() != cfg.key_bytes) throw std::invalid_argument("key length mismatch");
    if (op != Op::Delete && value.size() != cfg.value_bytes)
      throw std::invalid_argument("value length mismatch");
    // guarded block: the active buffer must not grow past sigma while a
    // cascade is still staged
    if (staged && active.size() >= cfg.sigma) drain_all();
    DeltaRecord rec{key, op, op == Op::Delete ? Value{} : value, next_seq++};
    active.insert(rec);
    if (op != Op::Put) saw_tombstones = true;
    if (!staged && active.size() > cfg.sigma) stage_cascade();
    if (staged) {
      if (cfg.deamortize)
        pump(false);
      else
        drain_all();
    }
  }

  std::optional<Value> resolve(const DeltaRecord& r) const {
    if (r.op == Op::Delete) return std::nullopt;
    return r.value;
  }

  std::optional<Value> point_query(const Key& key) {
    if (key.size() != cfg.key_bytes) throw std::invalid_argument("key length mismatch");
    QueryStats qs{};
    uint64_t r0 = io.seq_read_pages;
    auto done = [&](std::optional<Value> v) {
      qs.pages_read = io.seq_read_pages - r0;
      last_query = qs;
      return v;
    };
    if (const DeltaRecord* r = active.find(key)) return done(resolve(*r));
    if (const DeltaRecord* r = frozen_find(key)) return done(resolve(*r));
    SNodeId cur = root_id;
    for (;;) {
      SNode& n = node(cur);
      ++qs.snodes_visited;
      if (n.dtree && !n.dtree->empty_live() && key >= n.dtree->live_floor() &&
          key <= n.dtree->max_key && n.bloom.may_contain(key)) {
        ++qs.dtrees_searched;
        auto rec = dtree_lookup(*n.dtree, key, *pager, ReadCursor::A, io, cfg);
        if (rec) return done(resolve(*rec));
      }
      if (n.leaf()) return done(std::nullopt);
      cur = n.children[route_skeys(n.s_keys, key)];
    }
  }

  struct RangeSource {
    std::unique_ptr<SortedStream> stream;
    int priority = 0;  // smaller = newer level
    std::optional<DeltaRecord> head;
  };

  void collect_range_sources(SNodeId id, int level, const KeyRange& rng,
                             std::vector<RangeSource>& out) {
    SNode& n = node(id);
    if (n.dtree && !n.dtree->empty_live()) {
      RangeSource src;
      src.stream = dtree_scan(*n.dtree, rng, *pager, ReadCursor::B, io, cfg);
      src.priority = 2 + level;
      out.push_back(std::move(src));
    }
    size_t r = n.s_keys.size();
    for (size_t i = 0; i < n.children.size(); ++i) {
      bool lo_ok = i == 0 || n.s_keys[i - 1] <= rng.high;
      bool hi_ok = i == r || rng.low < n.s_keys[i];
      if (lo_ok && hi_ok) collect_range_sources(n.children[i], level + 1, rng, out);
    }
  }

  std::vector<std::pair<Key, Value>> range_query(const KeyRange& rng) {
    if (rng.low.size() != cfg.key_bytes || rng.high.size() != cfg.key_bytes)
      throw std::invalid_argument("range key length mismatch");
    if (rng.low > rng.high) throw std::invalid_argument("range low exceeds high");

    std::vector<RangeSource> sources;
    {
      std::vector<DeltaRecord> buf;
      for (auto it = active.entries().lower_bound(rng.low);
           it != active.entries().end() && it->first <= rng.high; ++it)
        buf.push_back(it->second);
      sources.push_back({std::make_unique<VectorStream>(std::move(buf)), 0, std::nullopt});
    }
    if (staged) {
      std::vector<DeltaRecord> buf;
      for (const DeltaRecord& r : staged->frozen)
        if (r.key >= rng.low && r.key <= rng.high) buf.push_back(r);
      sources.push_back({std::make_unique<VectorStream>(std::move(buf)), 1, std::nullopt});
    }
    collect_range_sources(root_id, 0, rng, sources);
    for (auto& s : sources) s.head = s.stream->next();

    std::vector<std::pair<Key, Value>> out;
    for (;;) {
      const Key* min_key = nullptr;
      for (auto& s : sources)
        if (s.head && (!min_key || s.head->key < *min_key)) min_key = &s.head->key;
      if (!min_key) break;
      Key k = *min_key;

      const DeltaRecord* winner = nullptr;
      int winner_prio = 0;
      for (auto& s : sources) {
        if (!s.head || s.head->key != k) continue;
        if (!winner || s.priority < winner_prio) {
          winner = &*s.head;
          winner_prio = s.priority;
        }
      }
      DeltaRecord win = *winner;
      for (auto& s : sources) {
        if (!s.head || s.head->key != k) continue;
        if (s.head->seq > win.seq)
          throw std::logic_error("range_query: deeper level carries a newer seq");
        s.head = s.stream->next();
      }
      if (win.op != Op::Delete) out.emplace_back(win.key, win.value);
    }
    return out;
  }

  // ---- validation -----------------------------------------------------------

  bool fail(ValidateReport& rep, const std::string& path, const std::string& msg) {
    if (rep.ok) {
      rep.ok = false;
      rep.detail = path + ": " + msg;
    }
    return false;
  }

  bool walk_validate(SNodeId id, uint32_t depth, const std::optional<Key>& lo,
                     const std::optional<Key>& hi, std::optional<uint32_t>& leaf_depth,
                     ValidateReport& rep, const std::string& path) {
    auto it = nodes.find(id);
    if (it == nodes.end()) return fail(rep, path, "dangling s-node id");
    SNode& n = it->second;
    rep.snodes++;
    rep.s_height = std::max(rep.s_height, depth + 1);

    for (size_t i = 0; i + 1 < n.s_keys.size(); ++i)
      if (n.s_keys[i] >= n.s_keys[i + 1]) return fail(rep, path, "s-keys not ascending");
    for (const Key& k : n.s_keys) {
      if (lo && k < *lo) return fail(rep, path, "s-key below the parent interval");
      if (hi && k >= *hi) return fail(rep, path, "s-key at or above the parent interval");
    }

    bool is_root = id == root_id;
    if (!n.leaf()) {
      if (n.children.size() != n.s_keys.size() + 1)
        return fail(rep, path, "children count does not match s-key count");
      if (n.children.size() > cfg.stree_fanout) return fail(rep, path, "fanout exceeded");
      uint32_t min_children = (cfg.stree_fanout + 1) / 2;
      if (!is_root && n.children.size() < min_children)
        return fail(rep, path, "non-root s-node under half full");
      if (is_root && n.children.size() < 2)
        return fail(rep, path, "non-leaf root with fewer than two children");
    } else {
      if (!leaf_depth) leaf_depth = depth;
      if (*leaf_depth != depth) return fail(rep, path, "leaf s-nodes at unequal depth");
    }

    if (is_root) {
      if (n.dtree) return fail(rep, path, "root carries an on-disk d-tree");
    } else {
      if (!n.dtree) return fail(rep, path, "non-root s-node without a d-tree");
      const DTree& d = *n.dtree;
      if (auto err = dtree_audit(d, *pager, cfg)) return fail(rep, path, *err);
      rep.dtrees++;
      rep.max_d_height = std::max(rep.max_d_height, d.height);
      rep.live_records += d.live_records;
      if (!d.empty_live()) {
        if (lo && d.live_floor() < *lo) return fail(rep, path, "live d-key below the interval");
        if (hi && d.max_key >= *hi) return fail(rep, path, "live d-key at or above the interval");
      }
      if (d.total_records > 0) {
        if (n.bloom.key_count() != d.total_records)
          return fail(rep, path, "bloom key count does not match the d-tree");
        if (!n.bloom.may_contain(d.min_key) || !n.bloom.may_contain(d.max_key))
          return fail(rep, path, "bloom misses a stored key");
      }
      // size requirements
      if (n.leaf()) {
        if (d.live_records > cfg.sigma) return fail(rep, path, "leaf d-tree above sigma");
        if (!saw_tombstones && d.live_records < (cfg.sigma + 1) / 2)
          return fail(rep, path, "leaf d-tree under half of sigma");
      } else if (cfg.mode == Mode::Basic) {
        if (d.live_records > cfg.sigma) return fail(rep, path, "d-tree above sigma");
      }
    }

    if (!n.leaf() && cfg.mode == Mode::Advanced) {
      uint64_t sibling_sum = 0;
      bool all_known = true, any_nonleaf = false;
      for (SNodeId cid : n.children) {
        auto cit = nodes.find(cid);
        if (cit == nodes.end()) {
          all_known = false;
          break;
        }
        if (!cit->second.leaf()) {
          any_nonleaf = true;
          sibling_sum += cit->second.live();
        }
      }
      if (all_known && any_nonleaf && sibling_sum > cfg.stree_fanout * (cfg.sigma + 1))
        return fail(rep, path, "sibling d-tree total above f*(sigma+1)");
    }

    for (size_t i = 0; i < n.children.size(); ++i) {
      std::optional<Key> clo = i == 0 ? lo : std::optional<Key>(n.s_keys[i - 1]);
      std::optional<Key> chi = i < n.s_keys.size() ? std::optional<Key>(n.s_keys[i]) : hi;
      if (!walk_validate(n.children[i], depth + 1, clo, chi, leaf_depth, rep,
                         path + "/" + std::to_string(i)))
        return false;
    }
    return true;
  }

  ValidateReport validate() {
    drain_all();
    ValidateReport rep;
    if (active.size() > cfg.sigma) {
      fail(rep, "root", "root buffer above sigma");
      return rep;
    }
    rep.live_records = 0;
    std::optional<uint32_t> leaf_depth;
    walk_validate(root_id, 0, std::nullopt, std::nullopt, leaf_depth, rep, "root");
    rep.live_records += active.size();
    try {
      pager->audit();
    } catch (const PagerError& e) {
      fail(rep, "pager", e.what());
    }
    return rep;
  }

  SNodeDump dump_node(SNodeId id, uint32_t level, bool with_keys) {
    SNode& n = node(id);
    SNodeDump d;
    d.id = id;
    d.level = level;
    d.s_keys = n.s_keys;
    d.is_root_buffer = id == root_id;
    if (id == root_id) {
      if (with_keys)
        for (const auto& [k, r] : active.entries()) d.dtree_keys.push_back(k);
    } else if (n.dtree) {
      d.live_start_key = n.dtree->live_start_key;
      if (with_keys && !n.dtree->empty_live()) {
        IoStats scratch;
        auto scan = dtree_scan(*n.dtree, std::nullopt, *pager, ReadCursor::A, scratch, cfg);
        while (auto rec = scan->next()) d.dtree_keys.push_back(rec->key);
      }
    }
    for (SNodeId cid : n.children) d.children.push_back(dump_node(cid, level + 1, with_keys));
    return d;
  }

  // ---- persistence ----------------------------------------------------------

  void write_key(ByteWriter& w, const Key& k) const { w.bytes(k); }
  Key read_key(ByteReader& r) const { return r.bytes(cfg.key_bytes); }

  void save_manifest() {
    if (dir.empty()) return;
    ByteWriter w;
    w.bytes(std::string_view(kMagic, 4));
    w.u32(kVersion);
    w.u64(cfg.page_bytes);
    w.u32(cfg.dtree_fanout);
    w.u32(cfg.stree_fanout);
    w.u64(cfg.sigma);
    w.u32(cfg.key_bytes);
    w.u32(cfg.value_bytes);
    w.u32(cfg.bloom_bits_per_key);
    w.u32(cfg.bloom_hashes);
    w.u8(static_cast<uint8_t>(cfg.mode));
    w.u8(cfg.deamortize ? 1 : 0);
    w.f64(cfg.cost.t_seek);
    w.f64(cfg.cost.t_seq_r);
    w.f64(cfg.cost.t_seq_w);
    w.u64(cfg.memory_budget);
    w.u64(next_seq);
    w.u64(next_id);
    w.u64(root_id);
    w.u64(pager->next_page());
    w.u8(saw_tombstones ? 1 : 0);

    auto live = pager->live_extents();
    w.u32(static_cast<uint32_t>(live.size()));
    for (const Extent& e : live) {
      w.u64(e.start);
      w.u64(e.length);
    }

    w.u32(static_cast<uint32_t>(nodes.size()));
    for (const auto& [id, n] : nodes) {
      w.u64(id);
      w.u32(static_cast<uint32_t>(n.s_keys.size()));
      for (const Key& k : n.s_keys) write_key(w, k);
      w.u32(static_cast<uint32_t>(n.children.size()));
      for (SNodeId cid : n.children) w.u64(cid);
      w.u8(n.dtree ? 1 : 0);
      if (n.dtree) {
        const DTree& d = *n.dtree;
        w.u64(d.extent.start);
        w.u64(d.extent.length);
        w.u64(d.root_page);
        w.u32(d.height);
        w.u64(d.leaf_count);
        w.u64(d.total_records);
        w.u64(d.live_records);
        w.u8(d.total_records > 0 ? 1 : 0);
        if (d.total_records > 0) {
          write_key(w, d.min_key);
          write_key(w, d.max_key);
        }
        w.u8(d.live_start_key ? 1 : 0);
        if (d.live_start_key) {
          write_key(w, *d.live_start_key);
          w.u64(d.live_start_page.value_or(0));
        }
        w.sized(n.bloom.serialize());
      }
    }

    w.u64(active.size());
    for (const DeltaRecord& r : active.snapshot()) w.bytes(encode_record(r, cfg));

    std::string tmp = dir + "/manifest.tmp";
    std::string final_path = dir + "/manifest";
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw ManifestError("cannot create manifest temp file");
    ssize_t n = ::write(fd, w.buf.data(), w.buf.size());
    if (n != static_cast<ssize_t>(w.buf.size())) {
      ::close(fd);
      throw ManifestError("short write to manifest temp file");
    }
    ::fsync(fd);
    ::close(fd);
    if (::rename(tmp.c_str(), final_path.c_str()) != 0)
      throw ManifestError("manifest rename failed");
  }

  static Config read_config(ByteReader& r) {
    if (r.bytes(4) != std::string(kMagic, 4)) throw ManifestError("bad manifest magic");
    if (r.u32() != kVersion) throw ManifestError("manifest version mismatch");
    Config stored;
    stored.page_bytes = r.u64();
    stored.dtree_fanout = r.u32();
    stored.stree_fanout = r.u32();
    stored.sigma = r.u64();
    stored.key_bytes = r.u32();
    stored.value_bytes = r.u32();
    stored.bloom_bits_per_key = r.u32();
    stored.bloom_hashes = r.u32();
    stored.mode = static_cast<Mode>(r.u8());
    stored.deamortize = r.u8() != 0;
    stored.cost.t_seek = r.f64();
    stored.cost.t_seq_r = r.f64();
    stored.cost.t_seq_w = r.f64();
    stored.memory_budget = r.u64();
    return stored;
  }

  static Config peek_config(const std::string& blob) {
    ByteReader r{blob};
    return read_config(r);
  }

  void load_manifest(const std::string& blob, const Config& requested) {
    ByteReader r{blob};
    Config stored = read_config(r);
    if (!stored.structural_equal(requested))
      throw ConfigMismatch("stored config does not match the requested one");
    cfg = stored;
    cfg.deamortize = requested.deamortize;
    cfg.cost = requested.cost;
    cfg.memory_budget = requested.memory_budget;

    next_seq = r.u64();
    next_id = r.u64();
    root_id = r.u64();
    uint64_t next_page = r.u64();
    saw_tombstones = r.u8() != 0;

    std::vector<Extent> live(r.u32());
    for (Extent& e : live) {
      e.start = r.u64();
      e.length = r.u64();
    }
    pager->restore(next_page, live);

    uint32_t n_nodes = r.u32();
    nodes.clear();
    for (uint32_t i = 0; i < n_nodes; ++i) {
      SNode n;
      n.id = r.u64();
      uint32_t nk = r.u32();
      for (uint32_t k = 0; k < nk; ++k) n.s_keys.push_back(read_key(r));
      uint32_t nc = r.u32();
      for (uint32_t k = 0; k < nc; ++k) n.children.push_back(r.u64());
      if (r.u8()) {
        DTree d;
        d.extent.start = r.u64();
        d.extent.length = r.u64();
        d.root_page = r.u64();
        d.height = r.u32();
        d.leaf_count = r.u64();
        d.total_records = r.u64();
        d.live_records = r.u64();
        if (r.u8()) {
          d.min_key = read_key(r);
          d.max_key = read_key(r);
        }
        if (r.u8()) {
          d.live_start_key = read_key(r);
          d.live_start_page = r.u64();
        }
        n.bloom = BloomFilter::deserialize(r.sized());
        n.dtree = d;
      }
      SNodeId id = n.id;
      nodes.emplace(id, std::move(n));
    }
    if (!nodes.count(root_id)) throw ManifestError("manifest root id is dangling");

    uint64_t n_buf = r.u64();
    active = RootBuffer{};
    for (uint64_t i = 0; i < n_buf; ++i) {
      auto rec = decode_record(r.bytes(cfg.record_size()), cfg);
      active.insert(rec);
    }
    if (r.pos != blob.size()) throw ManifestError("trailing bytes in manifest");
  }
};

NBTree::NBTree() : impl_(std::make_unique<Impl>()) {}
NBTree::~NBTree() = default;

namespace {

std::string slurp(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ManifestError("cannot read manifest");
  std::string blob;
  char tmp[1 << 16];
  size_t got;
  while ((got = std::fread(tmp, 1, sizeof tmp, f)) > 0) blob.append(tmp, got);
  std::fclose(f);
  return blob;
}

}  // namespace

std::unique_ptr<NBTree> NBTree::open(const std::string& dir, const Config& cfg) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  auto t = std::unique_ptr<NBTree>(new NBTree());
  Impl& im = *t->impl_;
  im.cfg = cfg;
  im.dir = dir;
  im.pager = std::make_unique<FilePager>(dir + "/pages.dat", cfg.page_bytes);

  std::string manifest_path = dir + "/manifest";
  if (std::filesystem::exists(manifest_path)) {
    im.load_manifest(slurp(manifest_path), cfg);
  } else {
    SNode root;
    root.id = im.next_id++;
    im.root_id = root.id;
    im.nodes.emplace(root.id, std::move(root));
  }
  return t;
}

std::unique_ptr<NBTree> NBTree::open_existing(const std::string& dir) {
  std::string manifest_path = dir + "/manifest";
  if (!std::filesystem::exists(manifest_path))
    throw ManifestError("no manifest in " + dir);
  Config stored = Impl::peek_config(slurp(manifest_path));
  return open(dir, stored);
}

std::unique_ptr<NBTree> NBTree::open_in_memory(const Config& cfg) {
  cfg.validate();
  auto t = std::unique_ptr<NBTree>(new NBTree());
  Impl& im = *t->impl_;
  im.cfg = cfg;
  im.pager = std::make_unique<MemPager>(cfg.page_bytes);
  SNode root;
  root.id = im.next_id++;
  im.root_id = root.id;
  im.nodes.emplace(root.id, std::move(root));
  return t;
}

void NBTree::insert(const Key& key, const Value& value) { impl_->apply(Op::Put, key, value); }
void NBTree::update(const Key& key, const Value& value) { impl_->apply(Op::Update, key, value); }
void NBTree::erase(const Key& key) { impl_->apply(Op::Delete, key, {}); }

std::optional<Value> NBTree::point_query(const Key& key) { return impl_->point_query(key); }

std::vector<std::pair<Key, Value>> NBTree::range_query(const KeyRange& range) {
  return impl_->range_query(range);
}

uint64_t NBTree::deamortize_step() { return impl_->pump(false); }
void NBTree::drain() { impl_->drain_all(); }
bool NBTree::work_staged() const { return impl_->staged != nullptr; }

ValidateReport NBTree::validate() { return impl_->validate(); }

SNodeDump NBTree::dump(bool with_keys) { return impl_->dump_node(impl_->root_id, 0, with_keys); }

void NBTree::close() {
  impl_->drain_all();
  if (!impl_->dir.empty()) {
    if (auto* fp = dynamic_cast<FilePager*>(impl_->pager.get())) fp->sync();
    impl_->save_manifest();
  }
}

const Config& NBTree::config() const { return impl_->cfg; }
IoStats& NBTree::io() { return impl_->io; }
Pager& NBTree::pager() { return *impl_->pager; }
const QueryStats& NBTree::last_query() const { return impl_->last_query; }
uint64_t NBTree::next_seq() const { return impl_->next_seq; }
uint64_t NBTree::cascades_started() const { return impl_->cascades_started; }
uint64_t NBTree::cascades_completed() const { return impl_->cascades_completed; }

}  // namespace nbtree
