#pragma once

#include <complex>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "streamforge/host_array.hpp"
#include "streamforge/memory.hpp"
#include "streamforge/offload_array.hpp"

namespace streamforge {

namespace detail {
struct KernelImpl;
struct LibraryImpl;
struct DeviceCore;
}  // namespace detail

/// In-process kernel: receives one device address per argument, in order.
/// Arrays arrive as contiguous typed buffers; scalars as their 8-byte
/// (int64, double) or 16-byte (double complex) little-endian encodings.
using IntrinsicKernel = std::function<void(std::span<void* const> args)>;
using IntrinsicKernelMap = std::map<std::string, IntrinsicKernel>;

/// Names of the intrinsic libraries every runtime registers at startup.
inline constexpr const char* kBuiltinElementwise = "builtin-elementwise";
inline constexpr const char* kBuiltinGemm = "builtin-gemm";

enum class ArgClass : std::uint8_t {
  scalar_i64,
  scalar_f64,
  scalar_c128,
  host_array,
  offloaded,
  raw_device,
};

/// One kernel argument. Integers classify as int64 scalars, floating-point
/// values as double scalars.
class KernelArg {
 public:
  template <std::integral I>
    requires(!std::same_as<I, bool>)
  KernelArg(I v) : value_(static_cast<std::int64_t>(v)) {}
  template <std::floating_point F>
  KernelArg(F v) : value_(static_cast<double>(v)) {}
  KernelArg(std::complex<double> v) : value_(v) {}
  KernelArg(HostArray a) : value_(std::move(a)) {}
  KernelArg(OffloadArray a) : value_(std::move(a)) {}
  KernelArg(DevicePointer p) : value_(std::move(p)) {}

  ArgClass classification() const noexcept {
    return static_cast<ArgClass>(value_.index());
  }

  using Value = std::variant<std::int64_t, double, std::complex<double>,
                             HostArray, OffloadArray, DevicePointer>;
  const Value& value() const noexcept { return value_; }

 private:
  Value value_;
};

/// A kernel symbol resolved in a loaded library.
class KernelHandle {
 public:
  KernelHandle() = default;

  const std::string& name() const noexcept { return name_; }
  std::uint64_t library_id() const noexcept { return library_id_; }
  int device_id() const noexcept { return device_id_; }
  const std::shared_ptr<const detail::KernelImpl>& impl() const noexcept {
    return impl_;
  }

  friend bool operator==(const KernelHandle& a, const KernelHandle& b) {
    return a.library_id_ == b.library_id_ && a.name_ == b.name_;
  }

 private:
  friend class KernelLibrary;
  KernelHandle(std::string name, std::uint64_t library_id, int device_id,
               std::shared_ptr<const detail::KernelImpl> impl)
      : name_(std::move(name)),
        library_id_(library_id),
        device_id_(device_id),
        impl_(std::move(impl)) {}

  std::string name_;
  std::uint64_t library_id_ = 0;
  int device_id_ = -1;
  std::shared_ptr<const detail::KernelImpl> impl_;
};

enum class LibrarySource : std::uint8_t { intrinsic_registry, native_module };

/// A kernel library loaded on one device. Native modules stay loaded while
/// the library or any handle obtained from it is alive.
class KernelLibrary {
 public:
  KernelLibrary() = default;

  std::uint64_t id() const noexcept { return id_; }
  int device_id() const noexcept { return device_id_; }
  LibrarySource source() const noexcept;
  const std::string& name() const;

  /// Throws Error(symbol_not_found) for unknown names.
  KernelHandle get_kernel(const std::string& name) const;

  /// Symbol names for intrinsic libraries; empty for native modules, whose
  /// symbols are resolved lazily.
  std::vector<std::string> symbols() const;

 private:
  friend class OffloadDevice;
  friend struct detail::DeviceCore;
  KernelLibrary(std::uint64_t id, int device_id,
                std::shared_ptr<detail::LibraryImpl> impl)
      : id_(id), device_id_(device_id), impl_(std::move(impl)) {}

  std::uint64_t id_ = 0;
  int device_id_ = -1;
  std::shared_ptr<detail::LibraryImpl> impl_;
};

/// The built-in intrinsic kernels (element-wise family, GEMM), keyed by
/// library name.
std::map<std::string, IntrinsicKernelMap> builtin_intrinsic_libraries();

}  // namespace streamforge
