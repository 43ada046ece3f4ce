#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <type_traits>
#include <variant>

namespace streamforge {

namespace detail {
struct AllocationState;
}

/// Opaque handle to a device allocation, or to a byte window inside one.
///
/// The handle is valid as soon as allocate_device_memory returns; the backing
/// storage materializes when the allocation request executes. Copies share
/// ownership: once the last copy (and every queued request referencing it) is
/// gone, the allocation is released on its owning stream unless it was
/// deallocated explicitly.
class DevicePointer {
 public:
  DevicePointer() = default;

  int device_id() const;
  std::uint64_t alloc_id() const;
  /// Alignment requested at allocation time.
  std::size_t alignment() const;
  /// Bytes covered by this handle (the whole allocation unless sliced).
  std::size_t length() const noexcept { return length_; }
  /// Byte offset of this window inside the allocation.
  std::size_t offset() const noexcept { return offset_; }
  /// Arena offset of the window start, once the allocation has executed.
  std::optional<std::size_t> base() const;

  /// Window of `length` bytes starting `offset` bytes into this one.
  /// Throws Error(range_error) if it does not fit.
  DevicePointer slice(std::size_t offset, std::size_t length) const;

  explicit operator bool() const noexcept { return state_ != nullptr; }

  friend bool operator==(const DevicePointer& a, const DevicePointer& b) {
    return a.state_ == b.state_ && a.offset_ == b.offset_ &&
           a.length_ == b.length_;
  }

  const std::shared_ptr<detail::AllocationState>& state() const noexcept {
    return state_;
  }

 private:
  friend class OffloadStream;
  DevicePointer(std::shared_ptr<detail::AllocationState> state,
                std::size_t offset, std::size_t length)
      : state_(std::move(state)), offset_(offset), length_(length) {}

  std::shared_ptr<detail::AllocationState> state_;
  std::size_t offset_ = 0;
  std::size_t length_ = 0;
};

/// A contiguous host byte region. The region must stay valid and unmoved
/// until the stream holding a transfer that references it has been synced.
struct HostBufferRef {
  std::byte* data = nullptr;
  std::size_t length = 0;
  bool writable = true;

  template <typename T>
  static HostBufferRef from(std::span<T> s) {
    if constexpr (std::is_const_v<T>) {
      return {const_cast<std::byte*>(
                  reinterpret_cast<const std::byte*>(s.data())),
              s.size_bytes(), false};
    } else {
      return {reinterpret_cast<std::byte*>(s.data()), s.size_bytes(), true};
    }
  }
};

enum class TransferDirection : std::uint8_t {
  host2device,
  device2host,
  device2device
};

using TransferOperand = std::variant<HostBufferRef, DevicePointer>;

}  // namespace streamforge
