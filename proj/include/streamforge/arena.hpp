#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

namespace streamforge {

/// First-fit free-list allocator over one contiguous byte range.
///
/// Offsets handed out are relative to data(); the storage itself is aligned
/// to kMaxAlignment so an offset that is a multiple of `alignment` is also a
/// suitably aligned address. Every reservation is rounded up to kGranule
/// bytes; bytes_in_use() counts the rounded sizes. Freshly allocated bytes are
/// filled with kDebugFill.
class Arena {
 public:
  static constexpr std::size_t kGranule = 64;
  static constexpr std::size_t kMaxAlignment = 4096;
  static constexpr std::byte kDebugFill{0xCD};

  struct Block {
    std::size_t offset;
    std::size_t length;    // requested bytes
    std::size_t reserved;  // length rounded up to kGranule
  };

  explicit Arena(std::size_t capacity);

  Arena(const Arena&) = delete;
  Arena& operator=(const Arena&) = delete;

  /// Reserves `nbytes` at an offset that is a multiple of `alignment`.
  /// Returns nullopt when no free block is large enough.
  std::optional<std::size_t> allocate(std::uint64_t alloc_id,
                                      std::size_t nbytes,
                                      std::size_t alignment);

  /// Returns false if `alloc_id` is not live.
  bool release(std::uint64_t alloc_id);

  const Block* find(std::uint64_t alloc_id) const;

  std::byte* data() noexcept { return storage_.get(); }
  const std::byte* data() const noexcept { return storage_.get(); }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t bytes_in_use() const noexcept { return in_use_; }
  std::size_t live_count() const noexcept { return live_.size(); }

  /// Live blocks sorted by offset.
  std::vector<Block> live_blocks() const;

  /// True when live blocks are pairwise disjoint, inside the arena, and the
  /// free list plus live blocks account for every byte exactly once.
  bool audit() const;

 private:
  struct FreeDeleter {
    void operator()(std::byte* p) const noexcept;
  };

  std::size_t capacity_;
  std::unique_ptr<std::byte[], FreeDeleter> storage_;
  std::map<std::size_t, std::size_t> free_;  // offset -> size
  std::unordered_map<std::uint64_t, Block> live_;
  std::size_t in_use_ = 0;
};

}  // namespace streamforge
