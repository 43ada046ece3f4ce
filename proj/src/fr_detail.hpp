#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "streamforge/codegen.hpp"
#include "streamforge/fr/config.hpp"
#include "streamforge/kernel.hpp"
#include "streamforge/runtime.hpp"

namespace streamforge::fr::detail {

/// A group of point-wise kernels realised either as intrinsics registered
/// with the runtime or as compiled native modules, plus always-intrinsic
/// helpers.
class KernelSet {
 public:
  using IntrinsicFactory = std::function<IntrinsicKernel(const GeneratedSource&)>;

  KernelSet(Runtime& runtime, int device_id, SolverBackend backend,
            CompileOptions compile);

  std::size_t add(const KernelSpec& spec, IntrinsicFactory intrinsic);
  std::size_t add_intrinsic(const std::string& name, IntrinsicKernel kernel);

  /// Registers / compiles and loads everything added so far. Once only.
  void build();

  const KernelHandle& handle(std::size_t slot) const { return handles_.at(slot); }
  const GeneratedSource& source(std::size_t slot) const {
    return sources_.at(slot);
  }

 private:
  Runtime* runtime_;
  int device_id_;
  SolverBackend backend_;
  CompileOptions compile_;
  std::vector<GeneratedSource> sources_;
  std::vector<IntrinsicFactory> factories_;
  std::vector<bool> generated_;
  std::vector<IntrinsicKernel> helpers_;
  std::vector<KernelHandle> handles_;
  std::vector<KernelLibrary> libraries_;
};

/// One device allocation sliced into 64-byte aligned parts.
struct SlicedBlock {
  DevicePointer block;
  std::vector<DevicePointer> parts;
  std::size_t used = 0;  // bytes up to the end of the last part
};

SlicedBlock allocate_sliced(OffloadStream& stream,
                            const std::vector<std::size_t>& sizes);

template <typename T>
T* arg(std::span<void* const> a, std::size_t i) {
  return static_cast<T*>(a[i]);
}

}  // namespace streamforge::fr::detail
