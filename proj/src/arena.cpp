#include "streamforge/arena.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <new>

namespace streamforge {

namespace {

constexpr std::size_t round_up(std::size_t v, std::size_t to) {
  return (v + to - 1) / to * to;
}

}  // namespace

void Arena::FreeDeleter::operator()(std::byte* p) const noexcept {
  std::free(p);
}

Arena::Arena(std::size_t capacity) : capacity_(round_up(capacity, kGranule)) {
  // Pages are committed lazily by the OS; only allocated ranges get touched.
  auto* raw = static_cast<std::byte*>(
      std::aligned_alloc(kMaxAlignment, round_up(capacity_, kMaxAlignment)));
  if (raw == nullptr && capacity_ != 0) {
    throw std::bad_alloc();
  }
  storage_.reset(raw);
  if (capacity_ != 0) {
    free_.emplace(0, capacity_);
  }
}

std::optional<std::size_t> Arena::allocate(std::uint64_t alloc_id,
                                           std::size_t nbytes,
                                           std::size_t alignment) {
  const std::size_t reserved = round_up(nbytes, kGranule);
  const std::size_t align = std::max(alignment, kGranule);
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    const auto [start, size] = *it;
    const std::size_t aligned = round_up(start, align);
    if (aligned < start || aligned - start > size ||
        size - (aligned - start) < reserved) {
      continue;
    }
    const std::size_t lead = aligned - start;
    const std::size_t tail = size - lead - reserved;
    free_.erase(it);
    if (lead != 0) {
      free_.emplace(start, lead);
    }
    if (tail != 0) {
      free_.emplace(aligned + reserved, tail);
    }
    live_.emplace(alloc_id, Block{aligned, nbytes, reserved});
    in_use_ += reserved;
    std::memset(storage_.get() + aligned, static_cast<int>(kDebugFill),
                reserved);
    return aligned;
  }
  return std::nullopt;
}

bool Arena::release(std::uint64_t alloc_id) {
  auto it = live_.find(alloc_id);
  if (it == live_.end()) {
    return false;
  }
  std::size_t offset = it->second.offset;
  std::size_t size = it->second.reserved;
  in_use_ -= size;
  live_.erase(it);

  // Coalesce with neighbours.
  auto next = free_.lower_bound(offset);
  if (next != free_.end() && offset + size == next->first) {
    size += next->second;
    next = free_.erase(next);
  }
  if (next != free_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second == offset) {
      offset = prev->first;
      size += prev->second;
      free_.erase(prev);
    }
  }
  free_.emplace(offset, size);
  return true;
}

const Arena::Block* Arena::find(std::uint64_t alloc_id) const {
  auto it = live_.find(alloc_id);
  return it == live_.end() ? nullptr : &it->second;
}

std::vector<Arena::Block> Arena::live_blocks() const {
  std::vector<Block> out;
  out.reserve(live_.size());
  for (const auto& [id, block] : live_) {
    out.push_back(block);
  }
  std::sort(out.begin(), out.end(),
            [](const Block& a, const Block& b) { return a.offset < b.offset; });
  return out;
}

bool Arena::audit() const {
  struct Range {
    std::size_t begin, end;
  };
  std::vector<Range> ranges;
  std::size_t live_total = 0;
  for (const auto& [id, block] : live_) {
    if (block.reserved < block.length) {
      return false;
    }
    ranges.push_back({block.offset, block.offset + block.reserved});
    live_total += block.reserved;
  }
  if (live_total != in_use_) {
    return false;
  }
  for (const auto& [offset, size] : free_) {
    ranges.push_back({offset, offset + size});
  }
  std::sort(ranges.begin(), ranges.end(),
            [](const Range& a, const Range& b) { return a.begin < b.begin; });
  std::size_t cursor = 0;
  for (const auto& r : ranges) {
    if (r.begin != cursor || r.end <= r.begin) {
      return false;
    }
    cursor = r.end;
  }
  return cursor == capacity_;
}

}  // namespace streamforge
