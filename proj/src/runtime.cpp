#include "streamforge/runtime.hpp"

#include <dlfcn.h>

#include <cstdlib>
#include <string>
#include <utility>

#include "detail.hpp"

namespace streamforge {

namespace detail {

namespace {

constexpr std::size_t kMaxNativeArity = 32;

template <std::size_t... I>
void call_native_n(void* fn, [[maybe_unused]] std::span<void* const> a,
                   std::index_sequence<I...>) {
  using Fn = void (*)(decltype((void)I, static_cast<void*>(nullptr))...);
  reinterpret_cast<Fn>(fn)(a[I]...);
}

template <std::size_t... N>
void dispatch_native(void* fn, std::span<void* const> args,
                     std::index_sequence<N...>) {
  ((args.size() == N
        ? (call_native_n(fn, args, std::make_index_sequence<N>{}), true)
        : false) ||
   ...);
}

}  // namespace

void KernelImpl::call(std::span<void* const> args) const {
  if (intrinsic) {
    intrinsic(args);
    return;
  }
  if (args.size() > kMaxNativeArity) {
    throw Error(Errc::invalid_argument,
                "native kernels take at most " +
                    std::to_string(kMaxNativeArity) + " arguments");
  }
  dispatch_native(native, args,
                  std::make_index_sequence<kMaxNativeArity + 1>{});
}

LibraryImpl::~LibraryImpl() {
  if (dl_handle != nullptr) {
    dlclose(dl_handle);
  }
}

}  // namespace detail

std::string_view to_string(DType t) noexcept {
  switch (t) {
    case DType::i64: return "i64";
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::c128: return "c128";
    case DType::i32: return "i32";
    case DType::u8: return "u8";
  }
  return "?";
}

std::string_view to_string(Precision p) noexcept {
  return p == Precision::f32 ? "f32" : "f64";
}

std::string_view to_string(RequestKind k) noexcept {
  switch (k) {
    case RequestKind::alloc: return "alloc";
    case RequestKind::dealloc: return "dealloc";
    case RequestKind::transfer_h2d: return "h2d";
    case RequestKind::transfer_d2h: return "d2h";
    case RequestKind::transfer_d2d: return "d2d";
    case RequestKind::invoke: return "invoke";
  }
  return "?";
}

std::string_view to_string(RequestStatus s) noexcept {
  switch (s) {
    case RequestStatus::queued: return "queued";
    case RequestStatus::running: return "running";
    case RequestStatus::done: return "done";
    case RequestStatus::failed: return "failed";
  }
  return "?";
}

std::string_view to_string(RequestRole r) noexcept {
  switch (r) {
    case RequestRole::user: return "user";
    case RequestRole::marshal: return "marshal";
    case RequestRole::array_copy_in: return "array_copy_in";
    case RequestRole::array_copy_out: return "array_copy_out";
    case RequestRole::scalar_copy_in: return "scalar_copy_in";
    case RequestRole::update_device: return "update_device";
    case RequestRole::update_host: return "update_host";
    case RequestRole::auto_release: return "auto_release";
  }
  return "?";
}

// --- KernelLibrary ---------------------------------------------------------

LibrarySource KernelLibrary::source() const noexcept {
  return impl_ ? impl_->source : LibrarySource::intrinsic_registry;
}

const std::string& KernelLibrary::name() const {
  if (!impl_) {
    throw Error(Errc::invalid_handle, "empty kernel library handle");
  }
  return impl_->name;
}

KernelHandle KernelLibrary::get_kernel(const std::string& name) const {
  if (!impl_) {
    throw Error(Errc::invalid_handle, "empty kernel library handle");
  }
  std::lock_guard lk(impl_->mu);
  if (auto it = impl_->resolved.find(name); it != impl_->resolved.end()) {
    return KernelHandle(name, id_, device_id_, it->second);
  }
  auto k = std::make_shared<detail::KernelImpl>();
  k->name = name;
  if (impl_->source == LibrarySource::intrinsic_registry) {
    auto it = impl_->kernels.find(name);
    if (it == impl_->kernels.end()) {
      throw Error(Errc::symbol_not_found,
                  "no kernel '" + name + "' in library '" + impl_->name + "'");
    }
    k->intrinsic = it->second;
  } else {
    dlerror();
    void* sym = dlsym(impl_->dl_handle, name.c_str());
    if (sym == nullptr) {
      throw Error(Errc::symbol_not_found,
                  "no symbol '" + name + "' in '" + impl_->name + "'");
    }
    k->native = sym;
    k->library = impl_;
  }
  impl_->resolved.emplace(name, k);
  return KernelHandle(name, id_, device_id_, std::move(k));
}

std::vector<std::string> KernelLibrary::symbols() const {
  std::vector<std::string> out;
  if (impl_ && impl_->source == LibrarySource::intrinsic_registry) {
    for (const auto& [name, fn] : impl_->kernels) {
      out.push_back(name);
    }
  }
  return out;
}

// --- OffloadDevice ---------------------------------------------------------

std::string OffloadDevice::name() const {
  return runtime_->device(id_).name;
}

DeviceCapabilities OffloadDevice::capabilities() const {
  return {runtime_->device(id_).config_snapshot().arena_bytes, 1};
}

DeviceConfig OffloadDevice::config() const {
  return runtime_->device(id_).config_snapshot();
}

OffloadStream OffloadDevice::get_default_stream() const {
  return OffloadStream(runtime_, runtime_->device(id_).default_stream());
}

OffloadStream OffloadDevice::create_stream() const {
  return OffloadStream(runtime_, runtime_->device(id_).new_stream());
}

KernelLibrary OffloadDevice::load_library(
    const std::string& name_or_path) const {
  auto& dev = runtime_->device(id_);
  std::shared_ptr<detail::LibraryImpl> impl;
  {
    std::lock_guard lk(runtime_->registry_mu);
    if (auto it = runtime_->intrinsics.find(name_or_path);
        it != runtime_->intrinsics.end()) {
      impl = it->second;
    }
  }
  if (!impl) {
    void* handle = dlopen(name_or_path.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (handle == nullptr) {
      const char* why = dlerror();
      throw Error(Errc::library_load_error,
                  "cannot load '" + name_or_path +
                      "': " + (why ? why : "unknown error"));
    }
    impl = std::make_shared<detail::LibraryImpl>();
    impl->name = name_or_path;
    impl->source = LibrarySource::native_module;
    impl->dl_handle = handle;
  }
  return KernelLibrary(runtime_->next_library_id.fetch_add(1), dev.id,
                       std::move(impl));
}

std::size_t OffloadDevice::bytes_in_use() const {
  return runtime_->device(id_).bytes_in_use();
}

std::size_t OffloadDevice::live_allocations() const {
  return runtime_->device(id_).live_allocations();
}

bool OffloadDevice::audit_arena() const {
  return runtime_->device(id_).audit_arena();
}

// --- Runtime ---------------------------------------------------------------

RuntimeOptions RuntimeOptions::from_env() {
  RuntimeOptions opts;
  if (const char* env = std::getenv("STREAMFORGE_DEVICES")) {
    try {
      opts.n_devices = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument,
                  std::string("STREAMFORGE_DEVICES must be an integer, got '") +
                      env + "'");
    }
  }
  return opts;
}

Runtime::Runtime() : Runtime(RuntimeOptions::from_env()) {}

Runtime::Runtime(RuntimeOptions options)
    : core_(std::make_shared<detail::RuntimeCore>(options.n_devices,
                                                  options.device)) {}

Runtime& Runtime::global() {
  static Runtime runtime;
  return runtime;
}

std::vector<OffloadDevice> Runtime::list_devices() const {
  std::vector<OffloadDevice> out;
  for (std::size_t i = 0; i < core_->devices.size(); ++i) {
    out.push_back(OffloadDevice(core_, static_cast<int>(i)));
  }
  return out;
}

std::size_t Runtime::device_count() const { return core_->devices.size(); }

OffloadDevice Runtime::device(int device_id) const {
  core_->device(device_id);  // validates
  return OffloadDevice(core_, device_id);
}

void Runtime::register_intrinsic_library(const std::string& name,
                                         IntrinsicKernelMap kernels) {
  if (name.empty()) {
    throw Error(Errc::invalid_argument, "library name must not be empty");
  }
  auto lib = std::make_shared<detail::LibraryImpl>();
  lib->name = name;
  lib->kernels = std::move(kernels);
  std::lock_guard lk(core_->registry_mu);
  if (!core_->intrinsics.emplace(name, std::move(lib)).second) {
    throw Error(Errc::invalid_argument,
                "intrinsic library '" + name + "' is already registered");
  }
}

void Runtime::configure_device(int device_id, std::size_t arena_bytes,
                               std::optional<TimingModel> timing,
                               bool realistic_timing) {
  core_->device(device_id).reconfigure(arena_bytes, timing, realistic_timing);
}

}  // namespace streamforge
