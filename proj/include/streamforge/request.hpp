#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace streamforge {

enum class RequestKind : std::uint8_t {
  alloc,
  dealloc,
  transfer_h2d,
  transfer_d2h,
  transfer_d2d,
  invoke,
};
inline constexpr std::size_t kRequestKindCount = 6;

enum class RequestStatus : std::uint8_t { queued, running, done, failed };

/// Who generated a request and why.
enum class RequestRole : std::uint8_t {
  user,            // enqueued directly through the stream API
  marshal,         // staging alloc/dealloc generated by invoke
  array_copy_in,   // invoke copy-in of a raw host array
  array_copy_out,  // invoke copy-out of a raw host array
  scalar_copy_in,  // invoke copy-in of a scalar argument
  update_device,   // OffloadArray populate / update_device()
  update_host,     // OffloadArray::update_host()
  auto_release,    // dealloc after the last DevicePointer owner went away
};
inline constexpr std::size_t kRequestRoleCount = 8;

std::string_view to_string(RequestKind k) noexcept;
std::string_view to_string(RequestStatus s) noexcept;
std::string_view to_string(RequestRole r) noexcept;

struct RequestRecord {
  std::uint64_t seq = 0;
  RequestKind kind = RequestKind::alloc;
  RequestRole role = RequestRole::user;
  std::size_t nbytes = 0;
  RequestStatus status = RequestStatus::queued;
  // Modeled duration when a timing model is installed (kernels always use
  // wall time), measured wall time otherwise.
  double seconds = 0.0;
  std::string label;  // kernel name for invokes
};

/// Running tallies over every request ever enqueued on a stream. Unlike the
/// record log these are never truncated.
struct RequestCounters {
  std::array<std::uint64_t, kRequestKindCount> by_kind{};
  std::array<std::uint64_t, kRequestRoleCount> by_role{};
  // Host<->device transfers of whole arrays (excludes scalar staging).
  std::uint64_t host_array_transfers = 0;

  std::uint64_t kind(RequestKind k) const {
    return by_kind[static_cast<std::size_t>(k)];
  }
  std::uint64_t role(RequestRole r) const {
    return by_role[static_cast<std::size_t>(r)];
  }
  /// Transfers the invoke marshalling inserted on the caller's behalf.
  std::uint64_t automatic_transfers() const {
    return role(RequestRole::array_copy_in) +
           role(RequestRole::array_copy_out) +
           role(RequestRole::scalar_copy_in);
  }
};

}  // namespace streamforge
