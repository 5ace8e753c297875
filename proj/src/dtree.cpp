#include "nbtree/dtree.hpp"

#include <algorithm>
#include <cstring>

namespace nbtree {

namespace {

constexpr size_t kPageHeader = 3;  // 1-byte node type + 2-byte entry count

void put_u16(Page& p, size_t off, uint16_t v) {
  p[off] = static_cast<char>(v & 0xff);
  p[off + 1] = static_cast<char>((v >> 8) & 0xff);
}

uint16_t get_u16(const Page& p, size_t off) {
  return static_cast<uint16_t>(static_cast<uint8_t>(p[off]) |
                               (static_cast<uint8_t>(p[off + 1]) << 8));
}

void append_u64(Page& p, uint64_t v) {
  for (int i = 0; i < 8; ++i) p.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64(const Page& p, size_t off) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(p[off + i]);
  return v;
}

bool is_leaf_page(const Page& p) { return p[0] == 0; }

std::vector<DeltaRecord> decode_leaf(const Page& p, const Config& cfg) {
  uint16_t n = get_u16(p, 1);
  std::vector<DeltaRecord> out;
  out.reserve(n);
  size_t rs = cfg.record_size();
  for (uint16_t i = 0; i < n; ++i)
    out.push_back(decode_record({p.data() + kPageHeader + i * rs, rs}, cfg));
  return out;
}

struct InternalNode {
  std::vector<Key> separators;
  std::vector<PageId> children;
};

InternalNode decode_internal(const Page& p, const Config& cfg) {
  uint16_t r = get_u16(p, 1);
  InternalNode node;
  node.separators.reserve(r);
  node.children.reserve(r + 1);
  size_t off = kPageHeader;
  for (uint16_t i = 0; i < r; ++i) {
    node.separators.emplace_back(p.data() + off, cfg.key_bytes);
    off += cfg.key_bytes;
    node.children.push_back(get_u64(p, off));
    off += 8;
  }
  node.children.push_back(get_u64(p, off));
  return node;
}

// Child index for a key: the number of separators <= key.
size_t route(const std::vector<Key>& seps, const Key& key) {
  return static_cast<size_t>(std::upper_bound(seps.begin(), seps.end(), key) - seps.begin());
}

}  // namespace

const DeltaRecord* PeekableStream::peek() {
  if (!ahead_) ahead_ = inner_->next();
  return ahead_ ? &*ahead_ : nullptr;
}

std::optional<DeltaRecord> PeekableStream::next() {
  if (ahead_) {
    std::optional<DeltaRecord> r;
    r.swap(ahead_);
    return r;
  }
  return inner_->next();
}

std::optional<DeltaRecord> SliceStream::next() {
  const DeltaRecord* p = src_.peek();
  if (!p) return std::nullopt;
  if (upper_ && p->key >= *upper_) return std::nullopt;
  return src_.next();
}

DeltaRecord resolve_newer(const DeltaRecord& newer, const DeltaRecord& older) {
  if (newer.op == Op::Put || newer.op == Op::Delete) return newer;
  // Update: becomes a live Put once its base record (or tombstone) is met;
  // over an older Update the base is still unresolved.
  if (older.op == Op::Update) return newer;
  DeltaRecord r = newer;
  r.op = Op::Put;
  return r;
}

MergeStream::MergeStream(std::unique_ptr<SortedStream> newer, std::unique_ptr<SortedStream> older,
                         bool leaf_level)
    : leaf_level_(leaf_level) {
  in_[0] = std::move(newer);
  in_[1] = std::move(older);
}

std::optional<DeltaRecord> MergeStream::pull(int side) {
  auto r = in_[side]->next();
  if (r) {
    if (last_emitted_[side] && r->key <= *last_emitted_[side])
      throw std::invalid_argument("merge_streams: input stream is not strictly ascending");
    last_emitted_[side] = r->key;
  }
  return r;
}

std::optional<DeltaRecord> MergeStream::resolve_once() {
  if (!head_[0]) head_[0] = pull(0);
  if (!head_[1]) head_[1] = pull(1);
  if (!head_[0] && !head_[1]) return std::nullopt;

  std::optional<DeltaRecord> out;
  if (head_[0] && (!head_[1] || head_[0]->key < head_[1]->key)) {
    out.swap(head_[0]);
  } else if (head_[1] && (!head_[0] || head_[1]->key < head_[0]->key)) {
    out.swap(head_[1]);
  } else {
    // same key: newer wins; the topmost occurrence must carry the newest seq
    if (head_[0]->seq <= head_[1]->seq)
      throw std::logic_error("merge_streams: newer stream carries a stale seq for key");
    out = resolve_newer(*head_[0], *head_[1]);
    head_[0].reset();
    head_[1].reset();
  }
  return out;
}

std::optional<DeltaRecord> MergeStream::next() {
  while (auto out = resolve_once()) {
    if (leaf_level_) {
      if (out->op == Op::Delete) continue;  // nothing deeper to mask
      if (out->op == Op::Update) out->op = Op::Put;
    }
    return out;
  }
  return std::nullopt;
}

std::unique_ptr<SortedStream> merge_streams(std::unique_ptr<SortedStream> newer,
                                            std::unique_ptr<SortedStream> older,
                                            bool leaf_level) {
  return std::make_unique<MergeStream>(std::move(newer), std::move(older), leaf_level);
}

uint64_t dtree_page_budget(uint64_t records, uint32_t leaf_cap, uint32_t fanout) {
  if (records == 0) return 0;
  uint64_t leaves = (records + leaf_cap - 1) / leaf_cap;
  uint64_t total = leaves;
  uint64_t level = leaves;
  while (level > 1) {
    level = (level + fanout - 1) / fanout;
    total += level;
  }
  return total;
}

DTreeBuilder::DTreeBuilder(const Config& cfg, Pager& pager)
    : cfg_(cfg), pager_(pager), leaf_cap_(cfg.leaf_capacity()), fanout_(cfg.internal_fanout()) {
  cur_.reserve(cfg.page_bytes);
}

void DTreeBuilder::add(const DeltaRecord& rec) {
  if (finished_) throw std::logic_error("DTreeBuilder: add after finish");
  if (count_ > 0 && rec.key <= last_key_)
    throw std::invalid_argument("bulk_build: input stream is not strictly ascending");
  if (cur_count_ == 0) {
    cur_.assign(kPageHeader, '\0');
    cur_[0] = 0;
    leaf_firsts_.push_back(rec.key);
  }
  cur_.append(encode_record(rec, cfg_));
  ++cur_count_;
  if (count_ == 0) min_key_ = rec.key;
  max_key_ = last_key_ = rec.key;
  ++count_;
  hashes_.push_back(hash128(rec.key));
  if (cur_count_ == leaf_cap_) seal_leaf();
}

void DTreeBuilder::seal_leaf() {
  put_u16(cur_, 1, static_cast<uint16_t>(cur_count_));
  cur_.resize(cfg_.page_bytes, '\0');
  pages_.push_back(std::move(cur_));
  cur_.clear();
  cur_count_ = 0;
}

void DTreeBuilder::finish() {
  if (finished_) return;
  if (cur_count_ > 0) seal_leaf();
  finished_ = true;
  leaf_pages_ = pages_.size();
  if (leaf_pages_ == 0) {
    height_ = 0;
    return;
  }

  uint64_t total_pages = dtree_page_budget(count_, leaf_cap_, fanout_);
  extent_ = pager_.allocate_extent(total_pages);

  // Internal levels bottom-up; each node takes fanout_ children so only the
  // rightmost node of a level can be under-full. Level entries carry the
  // first key of the node's leftmost descendant plus its local page index.
  struct Entry {
    Key first;
    uint64_t page;
  };
  std::vector<Entry> level;
  level.reserve(leaf_pages_);
  for (uint64_t i = 0; i < leaf_pages_; ++i) level.push_back({leaf_firsts_[i], i});
  height_ = 1;

  uint64_t next_idx = leaf_pages_;
  while (level.size() > 1) {
    std::vector<Entry> parents;
    for (size_t i = 0; i < level.size(); i += fanout_) {
      size_t end = std::min(level.size(), i + static_cast<size_t>(fanout_));
      size_t r = end - i - 1;  // separator count; children = r + 1
      Page p;
      p.reserve(cfg_.page_bytes);
      p.assign(kPageHeader, '\0');
      p[0] = 1;
      put_u16(p, 1, static_cast<uint16_t>(r));
      for (size_t j = 0; j < r; ++j) {
        p.append(level[i + 1 + j].first);  // separator = first key of child j+1
        append_u64(p, extent_.start + level[i + j].page);
      }
      append_u64(p, extent_.start + level[end - 1].page);
      p.resize(cfg_.page_bytes, '\0');
      parents.push_back({level[i].first, next_idx});
      pages_.push_back(std::move(p));
      ++next_idx;
    }
    level = std::move(parents);
    ++height_;
  }

  if (pages_.size() != total_pages)
    throw std::logic_error("bulk_build: page layout does not match the closed-form budget");
}

bool DTreeBuilder::write_some(IoStats& stats, uint64_t max_pages) {
  if (!finished_) throw std::logic_error("DTreeBuilder: write before finish");
  uint64_t n = std::min<uint64_t>(max_pages, pages_.size() - written_);
  if (n > 0) {
    std::vector<Page> chunk(pages_.begin() + written_, pages_.begin() + written_ + n);
    pager_.write_pages(extent_, written_, chunk, stats);
    written_ += n;
  }
  return written_ == pages_.size();
}

DTree DTreeBuilder::tree() const {
  if (!fully_written()) throw std::logic_error("DTreeBuilder: tree() before fully written");
  DTree d;
  d.extent = extent_;
  d.height = height_;
  d.leaf_count = leaf_pages_;
  d.total_records = count_;
  d.live_records = count_;
  d.min_key = min_key_;
  d.max_key = max_key_;
  d.root_page = height_ <= 1 ? extent_.start : extent_.start + pages_.size() - 1;
  return d;
}

BloomFilter DTreeBuilder::bloom() const {
  return BloomFilter::build(hashes_, cfg_.bloom_bits_per_key, cfg_.bloom_hashes);
}

BuiltDTree bulk_build(SortedStream& in, Pager& pager, IoStats& stats, const Config& cfg) {
  DTreeBuilder b(cfg, pager);
  while (auto rec = in.next()) b.add(*rec);
  b.finish();
  while (!b.write_some(stats, 1u << 20)) {}
  return {b.tree(), b.bloom()};
}

std::optional<DeltaRecord> dtree_lookup(const DTree& d, const Key& key, const Pager& pager,
                                        ReadCursor cursor, IoStats& stats, const Config& cfg) {
  if (d.empty_live()) return std::nullopt;
  if (key < d.live_floor() || key > d.max_key) return std::nullopt;

  PageId page = d.root_page;
  for (uint32_t depth = 0;; ++depth) {
    if (depth >= d.height) throw std::logic_error("dtree_lookup: descent deeper than height");
    Page p = pager.read_pages(d.extent, page - d.extent.start, 1, cursor, stats)[0];
    if (is_leaf_page(p)) {
      auto recs = decode_leaf(p, cfg);
      auto it = std::lower_bound(recs.begin(), recs.end(), key,
                                 [](const DeltaRecord& r, const Key& k) { return r.key < k; });
      if (it == recs.end() || it->key != key) return std::nullopt;
      return *it;
    }
    auto node = decode_internal(p, cfg);
    page = node.children[route(node.separators, key)];
  }
}

namespace {

class DTreeScanStream : public DTreeScanHandle {
 public:
  DTreeScanStream(const DTree& d, std::optional<KeyRange> range, const Pager& pager,
                  ReadCursor cursor, IoStats& stats, const Config& cfg)
      : d_(d), range_(std::move(range)), pager_(pager), cursor_(cursor), stats_(stats),
        cfg_(cfg) {}

  std::optional<DeltaRecord> next() override {
    if (!started_) start();
    while (!done_) {
      if (pos_ < buf_.size()) {
        const DeltaRecord& r = buf_[pos_];
        if (hi_ && r.key > *hi_) {
          done_ = true;
          return std::nullopt;
        }
        ++pos_;
        return r;
      }
      if (!advance_page()) done_ = true;
    }
    return std::nullopt;
  }

  PageId current_leaf() const override { return page_; }

 private:
  void start() {
    started_ = true;
    if (d_.empty_live()) {
      done_ = true;
      return;
    }
    lo_ = d_.live_floor();
    if (range_) {
      if (range_->low > lo_) lo_ = range_->low;
      hi_ = range_->high;
    }
    if (lo_ > d_.max_key || (hi_ && *hi_ < d_.live_floor())) {
      done_ = true;
      return;
    }
    if (lo_ == d_.live_floor() && d_.live_start_page) {
      page_ = *d_.live_start_page;
    } else if (lo_ <= d_.min_key) {
      page_ = d_.extent.start;
    } else {
      // one root-to-leaf descent to the first leaf that can contain lo_
      page_ = d_.root_page;
      while (true) {
        Page p = pager_.read_pages(d_.extent, page_ - d_.extent.start, 1, cursor_, stats_)[0];
        if (is_leaf_page(p)) {
          buf_ = decode_leaf(p, cfg_);
          skip_below_lo();
          loaded_ = true;
          return;
        }
        auto node = decode_internal(p, cfg_);
        page_ = node.children[route(node.separators, lo_)];
      }
    }
    load_page();
    skip_below_lo();
  }

  void skip_below_lo() {
    while (pos_ < buf_.size() && buf_[pos_].key < lo_) ++pos_;
  }

  void load_page() {
    Page p = pager_.read_pages(d_.extent, page_ - d_.extent.start, 1, cursor_, stats_)[0];
    buf_ = decode_leaf(p, cfg_);
    pos_ = 0;
    loaded_ = true;
  }

  bool advance_page() {
    PageId next = loaded_ ? page_ + 1 : page_;
    if (next >= d_.extent.start + d_.leaf_count) return false;
    page_ = next;
    load_page();
    return true;
  }

  DTree d_;
  std::optional<KeyRange> range_;
  const Pager& pager_;
  ReadCursor cursor_;
  IoStats& stats_;
  const Config& cfg_;

  bool started_ = false, done_ = false, loaded_ = false;
  Key lo_;
  std::optional<Key> hi_;
  PageId page_ = 0;
  std::vector<DeltaRecord> buf_;
  size_t pos_ = 0;
};

}  // namespace

std::unique_ptr<DTreeScanHandle> dtree_scan(const DTree& d, std::optional<KeyRange> range,
                                            const Pager& pager, ReadCursor cursor, IoStats& stats,
                                            const Config& cfg) {
  return std::make_unique<DTreeScanStream>(d, std::move(range), pager, cursor, stats, cfg);
}

namespace {

struct AuditWalk {
  const DTree& d;
  const Pager& pager;
  const Config& cfg;
  IoStats scratch;
  uint64_t leaves_seen = 0;
  uint64_t records = 0;
  uint64_t live = 0;
  std::optional<Key> last_key;

  std::optional<std::string> walk(PageId page, uint32_t depth, bool rightmost,
                                  const std::optional<Key>& lo, const std::optional<Key>& hi) {
    Page p = pager.read_pages(d.extent, page - d.extent.start, 1, ReadCursor::A, scratch)[0];
    bool leaf = is_leaf_page(p);
    if (leaf != (depth == d.height - 1)) return "node type does not match depth";
    if (leaf) {
      if (page != d.extent.start + leaves_seen) return "leaf pages out of key order in extent";
      ++leaves_seen;
      auto recs = decode_leaf(p, cfg);
      if (recs.empty()) return "empty leaf page";
      for (const auto& r : recs) {
        if (last_key && r.key <= *last_key) return "leaf records not strictly ascending";
        if (lo && r.key < *lo) return "record below separator bound";
        if (hi && r.key >= *hi) return "record at or above separator bound";
        last_key = r.key;
        ++records;
        if (!d.live_start_key || r.key >= *d.live_start_key) ++live;
      }
      return std::nullopt;
    }
    auto node = decode_internal(p, cfg);
    size_t kids = node.children.size();
    if (kids > cfg.internal_fanout()) return "internal node exceeds fanout";
    bool is_root = depth == 0;
    uint32_t min_kids = (cfg.internal_fanout() + 1) / 2;
    if (!is_root && !rightmost && kids < min_kids)
      return "internal node under half full";
    if (is_root && kids < 2) return "internal root with fewer than two children";
    for (size_t i = 0; i + 1 < node.separators.size(); ++i)
      if (node.separators[i] >= node.separators[i + 1]) return "separators not ascending";
    for (size_t i = 0; i < kids; ++i) {
      std::optional<Key> clo = i == 0 ? lo : std::optional<Key>(node.separators[i - 1]);
      std::optional<Key> chi = i + 1 < kids ? std::optional<Key>(node.separators[i]) : hi;
      auto err = walk(node.children[i], depth + 1, rightmost && i + 1 == kids, clo, chi);
      if (err) return err;
    }
    return std::nullopt;
  }
};

}  // namespace

std::optional<std::string> dtree_audit(const DTree& d, const Pager& pager, const Config& cfg) {
  if (d.height == 0) {
    if (d.total_records != 0 || d.live_records != 0 || d.extent.length != 0)
      return "empty d-tree with nonzero counts";
    return std::nullopt;
  }
  uint64_t budget = dtree_page_budget(d.total_records, cfg.leaf_capacity(), cfg.internal_fanout());
  if (d.extent.length != budget) return "extent length does not match page budget";
  AuditWalk w{d, pager, cfg};
  auto err = w.walk(d.root_page, 0, true, std::nullopt, std::nullopt);
  if (err) return err;
  if (w.leaves_seen != d.leaf_count) return "leaf count mismatch";
  if (w.records != d.total_records) return "record count mismatch";
  if (w.live != d.live_records) return "live record count mismatch";
  if (w.records > 0 && (!w.last_key || *w.last_key != d.max_key)) return "max key mismatch";
  return std::nullopt;
}

size_t RootBuffer::insert(const DeltaRecord& rec) {
  auto it = map_.find(rec.key);
  if (it == map_.end()) {
    map_.emplace(rec.key, rec);
  } else {
    if (rec.seq <= it->second.seq)
      throw std::logic_error("root buffer: stale seq on replacement");
    it->second = resolve_newer(rec, it->second);
  }
  return map_.size();
}

const DeltaRecord* RootBuffer::find(const Key& k) const {
  auto it = map_.find(k);
  return it == map_.end() ? nullptr : &it->second;
}

std::vector<DeltaRecord> RootBuffer::snapshot() const {
  std::vector<DeltaRecord> out;
  out.reserve(map_.size());
  for (const auto& [k, r] : map_) out.push_back(r);
  return out;
}

}  // namespace nbtree
