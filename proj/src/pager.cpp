#include "nbtree/pager.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace nbtree {

void IoStats::on_read(PageId first, uint64_t n, ReadCursor cursor) {
  if (n == 0) return;
  auto& next = read_next[static_cast<int>(cursor)];
  if (!next || *next != first) seeks++;
  seq_read_pages += n;
  next = first + n;
}

void IoStats::on_write(PageId first, uint64_t n) {
  if (n == 0) return;
  if (!write_next || *write_next != first) seeks++;
  seq_write_pages += n;
  write_next = first + n;
}

ModeledTime modeled_time(const IoStats& stats, const CostParams& p) {
  ModeledTime t;
  t.seek_s = static_cast<double>(stats.seeks) * p.t_seek;
  t.read_s = static_cast<double>(stats.seq_read_pages) * p.t_seq_r;
  t.write_s = static_cast<double>(stats.seq_write_pages) * p.t_seq_w;
  return t;
}

Extent Pager::allocate_extent(uint64_t n_pages) {
  if (n_pages == 0) throw std::invalid_argument("allocate_extent: n_pages must be >= 1");
  Extent e{next_page_, n_pages};
  store_grow(next_page_ + n_pages);
  extents_[e.start] = {n_pages, ExtentState::Live};
  next_page_ += n_pages;
  return e;
}

void Pager::check_live(const Extent& extent, const char* what) const {
  auto it = extents_.find(extent.start);
  if (it == extents_.end() || it->second.first != extent.length)
    throw PagerError(std::string(what) + ": unknown extent");
  if (it->second.second == ExtentState::Freed)
    throw PagerError(std::string(what) + ": extent already freed");
}

void Pager::free_extent(const Extent& extent) {
  auto it = extents_.find(extent.start);
  if (it == extents_.end() || it->second.first != extent.length)
    throw PagerError("free_extent: unknown extent");
  if (it->second.second == ExtentState::Freed)
    throw PagerError("free_extent: double free");
  it->second.second = ExtentState::Freed;
  store_release(extent.start, extent.length);
}

void Pager::write_pages(const Extent& extent, uint64_t offset,
                        const std::vector<Page>& pages, IoStats& stats) {
  check_live(extent, "write_pages");
  if (offset + pages.size() > extent.length)
    throw PagerError("write_pages: range outside extent");
  for (const Page& p : pages)
    if (p.size() != page_bytes_)
      throw PagerError("write_pages: page buffer has wrong size");
  PageId first = extent.start + offset;
  for (uint64_t i = 0; i < pages.size(); ++i) store_write(first + i, pages[i]);
  stats.on_write(first, pages.size());
}

std::vector<Page> Pager::read_pages(const Extent& extent, uint64_t offset, uint64_t n,
                                    ReadCursor cursor, IoStats& stats) const {
  check_live(extent, "read_pages");
  if (offset + n > extent.length)
    throw PagerError("read_pages: range outside extent");
  PageId first = extent.start + offset;
  std::vector<Page> out;
  out.reserve(n);
  for (uint64_t i = 0; i < n; ++i) out.push_back(store_read(first + i));
  stats.on_read(first, n, cursor);
  return out;
}

std::optional<ExtentState> Pager::extent_state(PageId start) const {
  auto it = extents_.find(start);
  if (it == extents_.end()) return std::nullopt;
  return it->second.second;
}

std::vector<Extent> Pager::live_extents() const {
  std::vector<Extent> out;
  for (const auto& [start, info] : extents_)
    if (info.second == ExtentState::Live) out.push_back({start, info.first});
  return out;
}

void Pager::audit() const {
  PageId prev_end = 0;
  bool first = true;
  for (const auto& [start, info] : extents_) {
    if (info.second != ExtentState::Live) continue;
    if (!first && start < prev_end) throw PagerError("audit: live extents overlap");
    if (start + info.first > next_page_) throw PagerError("audit: extent past end of store");
    prev_end = start + info.first;
    first = false;
  }
}

void Pager::restore(PageId next_page, const std::vector<Extent>& live) {
  next_page_ = next_page;
  extents_.clear();
  for (const Extent& e : live) extents_[e.start] = {e.length, ExtentState::Live};
  audit();
}

void MemPager::store_write(PageId page, const Page& data) { pages_[page] = data; }

Page MemPager::store_read(PageId page) const {
  auto it = pages_.find(page);
  if (it == pages_.end()) return Page(page_bytes_, '\0');
  return it->second;
}

void MemPager::store_release(PageId start, uint64_t n) {
  for (uint64_t i = 0; i < n; ++i) pages_.erase(start + i);
}

FilePager::FilePager(const std::string& path, uint64_t page_bytes)
    : Pager(page_bytes), path_(path) {
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw PagerError("cannot open pages file " + path + ": " + std::strerror(errno));
  struct stat st{};
  if (::fstat(fd_, &st) != 0) throw PagerError("fstat failed on " + path);
  next_page_ = static_cast<PageId>(st.st_size) / page_bytes_;
}

FilePager::~FilePager() {
  if (fd_ >= 0) ::close(fd_);
}

void FilePager::sync() {
  if (fd_ >= 0) ::fsync(fd_);
}

void FilePager::store_write(PageId page, const Page& data) {
  off_t off = static_cast<off_t>(page) * static_cast<off_t>(page_bytes_);
  ssize_t w = ::pwrite(fd_, data.data(), data.size(), off);
  if (w != static_cast<ssize_t>(data.size()))
    throw PagerError("short write to pages file: " + std::string(std::strerror(errno)));
}

Page FilePager::store_read(PageId page) const {
  Page buf(page_bytes_, '\0');
  off_t off = static_cast<off_t>(page) * static_cast<off_t>(page_bytes_);
  ssize_t r = ::pread(fd_, buf.data(), buf.size(), off);
  if (r < 0) throw PagerError("read from pages file failed: " + std::string(std::strerror(errno)));
  // a short read past the grown region yields zero fill, matching store_grow
  return buf;
}

void FilePager::store_grow(PageId up_to) {
  off_t size = static_cast<off_t>(up_to) * static_cast<off_t>(page_bytes_);
  if (::ftruncate(fd_, size) != 0) throw PagerError("cannot grow pages file");
}

}  // namespace nbtree
