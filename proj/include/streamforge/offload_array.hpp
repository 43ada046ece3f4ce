#pragma once

#include <complex>
#include <concepts>
#include <cstdint>
#include <optional>
#include <vector>

#include "streamforge/memory.hpp"
#include "streamforge/stream.hpp"
#include "streamforge/types.hpp"

namespace streamforge {

/// A typed device buffer with shape metadata, optionally bound to a host
/// array. Transfers between the two only happen through update_device() and
/// update_host(); passing an OffloadArray to invoke never triggers automatic
/// copies. Element-wise operations run as device kernels on the owning stream.
class OffloadArray {
 public:
  OffloadArray() = default;

  DType dtype() const noexcept { return dtype_; }
  const std::vector<std::int64_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept;
  std::size_t nbytes() const noexcept { return size() * elem_size(dtype_); }

  const DevicePointer& device_ptr() const noexcept { return device_ptr_; }
  const OffloadStream& stream() const noexcept { return stream_; }
  bool has_host_binding() const noexcept { return host_.has_value(); }
  const std::optional<HostBufferRef>& host_binding() const noexcept {
    return host_;
  }

  /// Enqueue a full-buffer host->device (resp. device->host) transfer.
  /// Throws Error(invalid_state) when no host array is bound.
  void update_device();
  void update_host();

  void zero();
  void fill(std::int64_t value);
  void fill(double value);
  void fill(std::complex<double> value);
  template <std::integral I>
  void fill(I value) {
    fill(static_cast<std::int64_t>(value));
  }
  void add(const OffloadArray& other);
  void multiply(const OffloadArray& other);

  explicit operator bool() const noexcept { return bool(device_ptr_); }

 private:
  friend class OffloadStream;
  OffloadArray(DType dtype, std::vector<std::int64_t> shape, DevicePointer ptr,
               std::optional<HostBufferRef> host, OffloadStream stream)
      : dtype_(dtype),
        shape_(std::move(shape)),
        device_ptr_(std::move(ptr)),
        host_(host),
        stream_(std::move(stream)) {}

  void binary_op(const char* op, const OffloadArray& other);
  void fill_impl(const KernelArg& value);

  DType dtype_ = DType::f64;
  std::vector<std::int64_t> shape_;
  DevicePointer device_ptr_;
  std::optional<HostBufferRef> host_;
  OffloadStream stream_;
};

}  // namespace streamforge
