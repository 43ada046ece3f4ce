#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "streamforge/host_array.hpp"
#include "streamforge/memory.hpp"
#include "streamforge/request.hpp"

namespace streamforge {

namespace detail {
struct StreamState;
struct RuntimeCore;
}  // namespace detail

class KernelArg;
class KernelHandle;
class OffloadArray;

/// An ordered queue of asynchronous device requests bound to one device.
///
/// Every method that enqueues returns immediately. Requests on one stream run
/// in enqueue order; failures are deferred and raised by sync(). After a
/// failure the remaining queued requests of the stream are skipped (status
/// failed) until sync() reports the error.
///
/// A stream may be handed between threads, but enqueueing on the same
/// stream from several threads at once needs external serialization.
class OffloadStream {
 public:
  OffloadStream() = default;

  std::uint64_t id() const;
  int device_id() const;

  /// Blocks until every request enqueued so far has finished. Throws the
  /// first deferred failure (tagged with its request sequence number).
  void sync();

  /// True when nothing is queued or running.
  bool idle() const;

  DevicePointer allocate_device_memory(std::size_t nbytes,
                                       std::size_t alignment = 64);
  void deallocate_device_memory(const DevicePointer& ptr);

  void transfer_host2device(HostBufferRef host, const DevicePointer& device,
                            std::size_t nbytes, std::size_t offset_host = 0,
                            std::size_t offset_device = 0);
  void transfer_device2host(const DevicePointer& device, HostBufferRef host,
                            std::size_t nbytes, std::size_t offset_device = 0,
                            std::size_t offset_host = 0);
  void transfer_device2device(const DevicePointer& src,
                              const DevicePointer& dst, std::size_t nbytes,
                              std::size_t offset_device_src = 0,
                              std::size_t offset_device_dst = 0);
  /// Direction-generic form. Operands that do not match the direction are
  /// rejected immediately with Error(invalid_argument).
  void transfer(TransferDirection direction, const TransferOperand& src,
                const TransferOperand& dst, std::size_t nbytes,
                std::size_t offset_src = 0, std::size_t offset_dst = 0);

  /// Enqueues a kernel invocation with copy-in/copy-out marshalling for raw
  /// host arrays, copy-in only for scalars, and no automatic transfers for
  /// OffloadArray or DevicePointer arguments. All generated requests are
  /// enqueued contiguously.
  void invoke(const KernelHandle& kernel, std::vector<KernelArg> args);

  /// Allocates a device buffer for `host` and binds it. With update_device
  /// the buffer is populated from the host array in stream order.
  OffloadArray bind(const HostArray& host, bool update_device = true);

  /// Allocates an unbound device array (contents: the debug fill pattern).
  OffloadArray empty(DType dtype, std::vector<std::int64_t> shape);

  /// Records of enqueued requests, oldest first. The log keeps the most
  /// recent `log_limit()` records; counters() is never truncated.
  std::vector<RequestRecord> request_log() const;
  RequestCounters counters() const;
  void clear_request_log();
  std::size_t log_limit() const;
  void set_log_limit(std::size_t limit);

  explicit operator bool() const noexcept { return state_ != nullptr; }
  friend bool operator==(const OffloadStream& a, const OffloadStream& b) {
    return a.state_ == b.state_;
  }

 private:
  friend class OffloadDevice;
  friend class OffloadArray;
  OffloadStream(std::shared_ptr<detail::RuntimeCore> runtime,
                std::shared_ptr<detail::StreamState> state)
      : runtime_(std::move(runtime)), state_(std::move(state)) {}

  detail::StreamState& state() const;

  std::shared_ptr<detail::RuntimeCore> runtime_;
  std::shared_ptr<detail::StreamState> state_;
};

}  // namespace streamforge
