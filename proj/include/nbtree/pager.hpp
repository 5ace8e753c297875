#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nbtree/core.hpp"

namespace nbtree {

using PageId = uint64_t;
using Page = std::string;  // exactly page_bytes bytes

enum class ExtentState : uint8_t { Live = 0, Freed = 1 };

struct Extent {
  PageId start = 0;
  uint64_t length = 0;

  bool operator==(const Extent&) const = default;
};

struct PagerError : std::runtime_error {
  explicit PagerError(const std::string& msg) : std::runtime_error(msg) {}
};

// Read cursors for the two read heads of the device model.
enum class ReadCursor : uint8_t { A = 0, B = 1 };

// Seek/sequential accounting. A page access is sequential when it is the
// successor of the chosen cursor's last page; otherwise it costs one seek.
// Each actor (query, merge, validator) owns its own IoStats so cursor state
// is per-actor.
struct IoStats {
  uint64_t seeks = 0;
  uint64_t seq_read_pages = 0;
  uint64_t seq_write_pages = 0;

  // next expected page per cursor; empty until the first access
  std::optional<PageId> read_next[2];
  std::optional<PageId> write_next;

  void on_read(PageId first, uint64_t n, ReadCursor cursor);
  void on_write(PageId first, uint64_t n);

  void reset_counters() { seeks = seq_read_pages = seq_write_pages = 0; }
};

struct ModeledTime {
  double seek_s = 0;
  double read_s = 0;
  double write_s = 0;

  double total() const { return seek_s + read_s + write_s; }
};

ModeledTime modeled_time(const IoStats& stats, const CostParams& p);

// Page-granular store with contiguous append-at-end extent allocation.
// Extents are never reused after free; pages of a Live extent are written by
// the owner once and never rewritten (the callers' copy-on-write contract).
class Pager {
 public:
  virtual ~Pager() = default;

  explicit Pager(uint64_t page_bytes) : page_bytes_(page_bytes) {}

  uint64_t page_bytes() const { return page_bytes_; }
  PageId next_page() const { return next_page_; }

  Extent allocate_extent(uint64_t n_pages);
  void free_extent(const Extent& extent);

  void write_pages(const Extent& extent, uint64_t offset,
                   const std::vector<Page>& pages, IoStats& stats);
  std::vector<Page> read_pages(const Extent& extent, uint64_t offset, uint64_t n,
                               ReadCursor cursor, IoStats& stats) const;

  std::optional<ExtentState> extent_state(PageId start) const;
  // All Live extents, for audits and the manifest.
  std::vector<Extent> live_extents() const;
  // Checks that Live extents are pairwise disjoint and within bounds.
  void audit() const;

  // Restores allocator state on open.
  void restore(PageId next_page, const std::vector<Extent>& live);

 protected:
  virtual void store_write(PageId page, const Page& data) = 0;
  virtual Page store_read(PageId page) const = 0;
  virtual void store_grow(PageId up_to) = 0;
  virtual void store_release(PageId start, uint64_t n) = 0;

  void check_live(const Extent& extent, const char* what) const;

  uint64_t page_bytes_;
  PageId next_page_ = 0;
  // extent start -> (length, state); append-only so starts are unique forever
  std::map<PageId, std::pair<uint64_t, ExtentState>> extents_;
};

// Backing store held in memory; freed extents release their storage.
class MemPager : public Pager {
 public:
  explicit MemPager(uint64_t page_bytes) : Pager(page_bytes) {}

 protected:
  void store_write(PageId page, const Page& data) override;
  Page store_read(PageId page) const override;
  void store_grow(PageId) override {}
  void store_release(PageId start, uint64_t n) override;

 private:
  std::unordered_map<PageId, Page> pages_;
};

// Backing store in a single pages file: page i at byte offset i * page_bytes.
class FilePager : public Pager {
 public:
  FilePager(const std::string& path, uint64_t page_bytes);
  ~FilePager() override;

  void sync();

 protected:
  void store_write(PageId page, const Page& data) override;
  Page store_read(PageId page) const override;
  void store_grow(PageId up_to) override;
  void store_release(PageId, uint64_t) override {}

 private:
  std::string path_;
  int fd_ = -1;
};

}  // namespace nbtree
