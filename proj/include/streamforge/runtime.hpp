#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streamforge/device_config.hpp"
#include "streamforge/error.hpp"
#include "streamforge/kernel.hpp"
#include "streamforge/stream.hpp"

namespace streamforge {

enum class DeviceKind : std::uint8_t { emulated };

struct DeviceCapabilities {
  std::size_t max_allocation_bytes = 0;
  int worker_count = 1;
};

/// Lightweight handle to a registered device. Keeps its runtime alive.
class OffloadDevice {
 public:
  int id() const noexcept { return id_; }
  std::string name() const;
  DeviceKind kind() const noexcept { return DeviceKind::emulated; }
  DeviceCapabilities capabilities() const;
  DeviceConfig config() const;

  /// The per-device default stream; the same stream on every call.
  OffloadStream get_default_stream() const;
  /// A fresh stream with no ordering relationship to any other stream.
  OffloadStream create_stream() const;

  /// Loads a registered intrinsic library by name, or a native shared module
  /// by path. Throws Error(library_load_error).
  KernelLibrary load_library(const std::string& name_or_path) const;

  /// Arena occupancy, counted in allocation granules.
  std::size_t bytes_in_use() const;
  std::size_t live_allocations() const;
  /// Checks the arena's allocator bookkeeping (disjoint live ranges).
  bool audit_arena() const;

  friend bool operator==(const OffloadDevice& a, const OffloadDevice& b) {
    return a.runtime_ == b.runtime_ && a.id_ == b.id_;
  }

 private:
  friend class Runtime;
  OffloadDevice(std::shared_ptr<detail::RuntimeCore> runtime, int id)
      : runtime_(std::move(runtime)), id_(id) {}

  std::shared_ptr<detail::RuntimeCore> runtime_;
  int id_ = 0;
};

struct RuntimeOptions {
  int n_devices = 1;
  DeviceConfig device;

  /// Device count from STREAMFORGE_DEVICES (default 1).
  static RuntimeOptions from_env();
};

/// Owns the emulated devices, their executors and the intrinsic kernel
/// registry. Handles obtained from a runtime keep it alive.
class Runtime {
 public:
  Runtime();
  explicit Runtime(RuntimeOptions options);

  /// Process-wide runtime configured from the environment.
  static Runtime& global();

  std::vector<OffloadDevice> list_devices() const;
  std::size_t device_count() const;
  /// Throws Error(device_not_found).
  OffloadDevice device(int device_id) const;

  OffloadStream get_default_stream(int device_id) const {
    return device(device_id).get_default_stream();
  }
  OffloadStream create_stream(int device_id) const {
    return device(device_id).create_stream();
  }

  /// Makes `kernels` loadable as library `name` on every device.
  /// Throws Error(invalid_argument) if the name is taken.
  void register_intrinsic_library(const std::string& name,
                                  IntrinsicKernelMap kernels);

  /// Resizes the arena and installs (or removes) the timing model. Requires
  /// no live allocations and idle streams: Error(invalid_state) otherwise.
  void configure_device(int device_id, std::size_t arena_bytes,
                        std::optional<TimingModel> timing = std::nullopt,
                        bool realistic_timing = false);

 private:
  std::shared_ptr<detail::RuntimeCore> core_;
};

}  // namespace streamforge
