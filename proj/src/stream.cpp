#include <bit>
#include <cstring>

#include "detail.hpp"
#include "streamforge/runtime.hpp"

namespace streamforge {

static_assert(std::endian::native == std::endian::little,
              "scalar argument encodings assume a little-endian host");

namespace {

using detail::DeviceView;
using detail::HostEndpoint;
using detail::Request;

DeviceView view_of(const DevicePointer& p) {
  return DeviceView{p.state(), p.offset(), p.length()};
}

void require_valid(const DevicePointer& p, const char* what) {
  if (!p) {
    throw Error(Errc::invalid_handle, std::string(what) + " is an empty handle");
  }
}

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

Request make_transfer(RequestKind kind, RequestRole role, std::size_t nbytes,
                      detail::Endpoint src, detail::Endpoint dst,
                      std::size_t offset_src, std::size_t offset_dst) {
  Request r;
  r.kind = kind;
  r.role = role;
  r.nbytes = nbytes;
  r.payload = detail::TransferOp{std::move(src), std::move(dst), offset_src,
                                 offset_dst};
  return r;
}

HostEndpoint host_endpoint(const HostBufferRef& h) {
  return HostEndpoint{h.data, h.length, h.writable, nullptr};
}

}  // namespace

// --- DevicePointer ---------------------------------------------------------

int DevicePointer::device_id() const {
  require_valid(*this, "device pointer");
  return state_->device_id;
}

std::uint64_t DevicePointer::alloc_id() const {
  require_valid(*this, "device pointer");
  return state_->alloc_id;
}

std::size_t DevicePointer::alignment() const {
  require_valid(*this, "device pointer");
  return state_->alignment;
}

std::optional<std::size_t> DevicePointer::base() const {
  require_valid(*this, "device pointer");
  const auto b = state_->base.load();
  if (b < 0) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(b) + offset_;
}

DevicePointer DevicePointer::slice(std::size_t offset,
                                   std::size_t length) const {
  require_valid(*this, "device pointer");
  if (offset > length_ || length > length_ - offset) {
    throw Error(Errc::range_error,
                "slice [" + std::to_string(offset) + ", " +
                    std::to_string(offset + length) + ") exceeds " +
                    std::to_string(length_) + " bytes");
  }
  return DevicePointer(state_, offset_ + offset, length);
}

// --- OffloadStream ---------------------------------------------------------

detail::StreamState& OffloadStream::state() const {
  if (!state_) {
    throw Error(Errc::invalid_handle, "empty stream handle");
  }
  return *state_;
}

std::uint64_t OffloadStream::id() const { return state().id; }

int OffloadStream::device_id() const { return state().device_id; }

void OffloadStream::sync() {
  auto& s = state();
  runtime_->device(s.device_id).sync(s);
}

bool OffloadStream::idle() const {
  auto& s = state();
  return runtime_->device(s.device_id).idle(s);
}

DevicePointer OffloadStream::allocate_device_memory(std::size_t nbytes,
                                                    std::size_t alignment) {
  auto& s = state();
  if (nbytes == 0) {
    throw Error(Errc::invalid_argument, "cannot allocate zero bytes");
  }
  if (!is_power_of_two(alignment) || alignment > Arena::kMaxAlignment) {
    throw Error(Errc::invalid_argument,
                "alignment must be a power of two no larger than " +
                    std::to_string(Arena::kMaxAlignment) + ", got " +
                    std::to_string(alignment));
  }
  auto alloc = std::make_shared<detail::AllocationState>();
  alloc->alloc_id = runtime_->next_alloc_id.fetch_add(1);
  alloc->device_id = s.device_id;
  alloc->length = nbytes;
  alloc->alignment = alignment;
  alloc->owner = state_;

  Request r;
  r.kind = RequestKind::alloc;
  r.nbytes = nbytes;
  r.payload = detail::AllocOp{alloc};
  std::vector<Request> batch;
  batch.push_back(std::move(r));
  runtime_->device(s.device_id).enqueue(s, std::move(batch));
  return DevicePointer(std::move(alloc), 0, nbytes);
}

void OffloadStream::deallocate_device_memory(const DevicePointer& ptr) {
  auto& s = state();
  require_valid(ptr, "device pointer");
  if (ptr.device_id() != s.device_id) {
    throw Error(Errc::invalid_argument,
                "pointer belongs to device " + std::to_string(ptr.device_id()) +
                    ", stream to device " + std::to_string(s.device_id));
  }
  ptr.state()->released.store(true);
  Request r;
  r.kind = RequestKind::dealloc;
  r.nbytes = ptr.state()->length;
  r.payload = detail::DeallocOp{ptr.alloc_id(), false};
  std::vector<Request> batch;
  batch.push_back(std::move(r));
  runtime_->device(s.device_id).enqueue(s, std::move(batch));
}

void OffloadStream::transfer_host2device(HostBufferRef host,
                                         const DevicePointer& device,
                                         std::size_t nbytes,
                                         std::size_t offset_host,
                                         std::size_t offset_device) {
  transfer(TransferDirection::host2device, host, device, nbytes, offset_host,
           offset_device);
}

void OffloadStream::transfer_device2host(const DevicePointer& device,
                                         HostBufferRef host,
                                         std::size_t nbytes,
                                         std::size_t offset_device,
                                         std::size_t offset_host) {
  transfer(TransferDirection::device2host, device, host, nbytes,
           offset_device, offset_host);
}

void OffloadStream::transfer_device2device(const DevicePointer& src,
                                           const DevicePointer& dst,
                                           std::size_t nbytes,
                                           std::size_t offset_device_src,
                                           std::size_t offset_device_dst) {
  transfer(TransferDirection::device2device, src, dst, nbytes,
           offset_device_src, offset_device_dst);
}

void OffloadStream::transfer(TransferDirection direction,
                             const TransferOperand& src,
                             const TransferOperand& dst, std::size_t nbytes,
                             std::size_t offset_src, std::size_t offset_dst) {
  auto& s = state();
  const auto* hsrc = std::get_if<HostBufferRef>(&src);
  const auto* hdst = std::get_if<HostBufferRef>(&dst);
  const auto* dsrc = std::get_if<DevicePointer>(&src);
  const auto* ddst = std::get_if<DevicePointer>(&dst);

  auto check_local = [&](const DevicePointer& p) {
    require_valid(p, "device operand");
    if (p.device_id() != s.device_id) {
      throw Error(Errc::invalid_argument,
                  "device operand lives on device " +
                      std::to_string(p.device_id()) + ", stream on device " +
                      std::to_string(s.device_id));
    }
  };

  Request r;
  switch (direction) {
    case TransferDirection::host2device:
      if (!hsrc || !ddst) {
        throw Error(Errc::invalid_argument,
                    "host2device needs a host source and a device destination");
      }
      check_local(*ddst);
      r = make_transfer(RequestKind::transfer_h2d, RequestRole::user, nbytes,
                        host_endpoint(*hsrc), view_of(*ddst), offset_src,
                        offset_dst);
      break;
    case TransferDirection::device2host:
      if (!dsrc || !hdst) {
        throw Error(Errc::invalid_argument,
                    "device2host needs a device source and a host destination");
      }
      check_local(*dsrc);
      r = make_transfer(RequestKind::transfer_d2h, RequestRole::user, nbytes,
                        view_of(*dsrc), host_endpoint(*hdst), offset_src,
                        offset_dst);
      break;
    case TransferDirection::device2device: {
      if (!dsrc || !ddst) {
        throw Error(Errc::invalid_argument,
                    "device2device needs device operands on both sides");
      }
      require_valid(*dsrc, "device source");
      require_valid(*ddst, "device destination");
      if (dsrc->device_id() != s.device_id && ddst->device_id() != s.device_id) {
        throw Error(Errc::invalid_argument,
                    "neither operand lives on the stream's device");
      }
      if (nbytes != 0 && dsrc->alloc_id() == ddst->alloc_id()) {
        const std::size_t a = dsrc->offset() + offset_src;
        const std::size_t b = ddst->offset() + offset_dst;
        if (a < b + nbytes && b < a + nbytes) {
          throw Error(Errc::invalid_argument,
                      "overlapping device2device copy within one allocation");
        }
      }
      r = make_transfer(RequestKind::transfer_d2d, RequestRole::user, nbytes,
                        view_of(*dsrc), view_of(*ddst), offset_src,
                        offset_dst);
      break;
    }
  }
  std::vector<Request> batch;
  batch.push_back(std::move(r));
  runtime_->device(s.device_id).enqueue(s, std::move(batch));
}

void OffloadStream::invoke(const KernelHandle& kernel,
                           std::vector<KernelArg> args) {
  auto& s = state();
  if (!kernel.impl()) {
    throw Error(Errc::invalid_handle, "empty kernel handle");
  }
  if (kernel.device_id() != s.device_id) {
    throw Error(Errc::invalid_argument,
                "kernel '" + kernel.name() + "' was loaded on device " +
                    std::to_string(kernel.device_id()) +
                    ", stream belongs to device " +
                    std::to_string(s.device_id));
  }

  auto new_staging = [&](std::size_t nbytes) {
    auto a = std::make_shared<detail::AllocationState>();
    a->alloc_id = runtime_->next_alloc_id.fetch_add(1);
    a->device_id = s.device_id;
    a->length = nbytes;
    a->alignment = 64;
    a->owner = state_;
    a->auto_release = false;
    return a;
  };
  auto alloc_request = [](const std::shared_ptr<detail::AllocationState>& a) {
    Request r;
    r.kind = RequestKind::alloc;
    r.role = RequestRole::marshal;
    r.nbytes = a->length;
    r.payload = detail::AllocOp{a};
    return r;
  };
  auto dealloc_request = [](const std::shared_ptr<detail::AllocationState>& a) {
    Request r;
    r.kind = RequestKind::dealloc;
    r.role = RequestRole::marshal;
    r.nbytes = a->length;
    r.payload = detail::DeallocOp{a->alloc_id, true};
    r.runs_after_failure = true;
    return r;
  };

  std::vector<DeviceView> views(args.size());
  std::vector<Request> array_in, scalar_in, array_out, scalar_free;
  std::vector<std::pair<std::size_t, const HostArray*>> host_arrays;
  std::vector<std::pair<std::size_t, std::shared_ptr<std::vector<std::byte>>>>
      scalars;

  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& v = args[i].value();
    switch (args[i].classification()) {
      case ArgClass::scalar_i64:
      case ArgClass::scalar_f64:
      case ArgClass::scalar_c128: {
        auto bytes = std::make_shared<std::vector<std::byte>>();
        std::visit(
            [&](const auto& x) {
              using T = std::decay_t<decltype(x)>;
              if constexpr (std::is_same_v<T, std::int64_t> ||
                            std::is_same_v<T, double> ||
                            std::is_same_v<T, std::complex<double>>) {
                bytes->resize(sizeof(T));
                std::memcpy(bytes->data(), &x, sizeof(T));
              }
            },
            v);
        scalars.emplace_back(i, std::move(bytes));
        break;
      }
      case ArgClass::host_array: {
        const auto& h = std::get<HostArray>(v);
        if (!is_offloadable(h.dtype)) {
          throw Error(Errc::invalid_argument,
                      "argument " + std::to_string(i) + ": dtype " +
                          std::string(to_string(h.dtype)) +
                          " cannot be offloaded");
        }
        if (!h.is_contiguous()) {
          throw Error(Errc::invalid_argument,
                      "argument " + std::to_string(i) +
                          ": host array is not contiguous");
        }
        if (h.data == nullptr || h.shape.empty() || h.nbytes() == 0) {
          throw Error(Errc::invalid_argument,
                      "argument " + std::to_string(i) +
                          ": empty or zero-dimensional host array");
        }
        host_arrays.emplace_back(i, &h);
        break;
      }
      case ArgClass::offloaded: {
        const auto& oa = std::get<OffloadArray>(v);
        if (!oa || oa.device_ptr().device_id() != s.device_id) {
          throw Error(Errc::invalid_argument,
                      "argument " + std::to_string(i) +
                          ": offload array is empty or on another device");
        }
        views[i] = view_of(oa.device_ptr());
        break;
      }
      case ArgClass::raw_device: {
        const auto& p = std::get<DevicePointer>(v);
        require_valid(p, "device pointer argument");
        if (p.device_id() != s.device_id) {
          throw Error(Errc::invalid_argument,
                      "argument " + std::to_string(i) +
                          ": device pointer lives on another device");
        }
        views[i] = view_of(p);
        break;
      }
    }
  }

  std::vector<Request> batch;
  // (1) raw host arrays: alloc + copy-in
  std::vector<std::shared_ptr<detail::AllocationState>> array_allocs;
  for (const auto& [i, h] : host_arrays) {
    auto a = new_staging(h->nbytes());
    views[i] = DeviceView{a, 0, a->length};
    batch.push_back(alloc_request(a));
    batch.push_back(make_transfer(RequestKind::transfer_h2d,
                                  RequestRole::array_copy_in, h->nbytes(),
                                  host_endpoint(h->buffer()), views[i], 0, 0));
    array_allocs.push_back(std::move(a));
  }
  // (2) scalars: alloc + copy-in of the encoding
  std::vector<std::shared_ptr<detail::AllocationState>> scalar_allocs;
  for (auto& [i, bytes] : scalars) {
    auto a = new_staging(bytes->size());
    views[i] = DeviceView{a, 0, a->length};
    batch.push_back(alloc_request(a));
    HostEndpoint src{bytes->data(), bytes->size(), false, bytes};
    batch.push_back(make_transfer(RequestKind::transfer_h2d,
                                  RequestRole::scalar_copy_in, bytes->size(),
                                  std::move(src), views[i], 0, 0));
    scalar_allocs.push_back(std::move(a));
  }
  // (3) the kernel itself
  {
    Request r;
    r.kind = RequestKind::invoke;
    r.label = kernel.name();
    r.payload = detail::InvokeOp{kernel.impl(), views};
    batch.push_back(std::move(r));
  }
  // (4) copy-out in positional order, then release staging
  for (std::size_t j = 0; j < host_arrays.size(); ++j) {
    const auto& [i, h] = host_arrays[j];
    batch.push_back(make_transfer(RequestKind::transfer_d2h,
                                  RequestRole::array_copy_out, h->nbytes(),
                                  views[i], host_endpoint(h->buffer()), 0, 0));
    batch.push_back(dealloc_request(array_allocs[j]));
  }
  for (const auto& a : scalar_allocs) {
    batch.push_back(dealloc_request(a));
  }
  runtime_->device(s.device_id).enqueue(s, std::move(batch));
}

OffloadArray OffloadStream::bind(const HostArray& host, bool update_device) {
  if (!is_offloadable(host.dtype)) {
    throw Error(Errc::invalid_argument,
                "dtype " + std::string(to_string(host.dtype)) +
                    " cannot be offloaded");
  }
  if (host.shape.empty()) {
    throw Error(Errc::invalid_argument, "cannot bind a 0-dimensional array");
  }
  for (auto extent : host.shape) {
    if (extent <= 0) {
      throw Error(Errc::invalid_argument, "array extents must be positive");
    }
  }
  if (!host.is_contiguous()) {
    throw Error(Errc::invalid_argument,
                "only contiguous row-major host arrays can be bound");
  }
  if (host.data == nullptr) {
    throw Error(Errc::invalid_argument, "host array has no data");
  }
  auto ptr = allocate_device_memory(host.nbytes());
  HostBufferRef binding = host.buffer();
  if (update_device) {
    auto& s = state();
    std::vector<Request> batch;
    batch.push_back(make_transfer(
        RequestKind::transfer_h2d, RequestRole::update_device, host.nbytes(),
        host_endpoint(binding), view_of(ptr), 0, 0));
    runtime_->device(s.device_id).enqueue(s, std::move(batch));
  }
  return OffloadArray(host.dtype, host.shape, std::move(ptr), binding, *this);
}

OffloadArray OffloadStream::empty(DType dtype,
                                  std::vector<std::int64_t> shape) {
  if (!is_offloadable(dtype)) {
    throw Error(Errc::invalid_argument,
                "dtype " + std::string(to_string(dtype)) +
                    " cannot be offloaded");
  }
  if (shape.empty()) {
    throw Error(Errc::invalid_argument, "0-dimensional arrays are not supported");
  }
  std::size_t n = elem_size(dtype);
  for (auto extent : shape) {
    if (extent <= 0) {
      throw Error(Errc::invalid_argument, "array extents must be positive");
    }
    n *= static_cast<std::size_t>(extent);
  }
  auto ptr = allocate_device_memory(n);
  return OffloadArray(dtype, std::move(shape), std::move(ptr), std::nullopt,
                      *this);
}

std::vector<RequestRecord> OffloadStream::request_log() const {
  auto& s = state();
  auto& dev = runtime_->device(s.device_id);
  std::lock_guard lk(dev.mu);
  return {s.log.begin(), s.log.end()};
}

RequestCounters OffloadStream::counters() const {
  auto& s = state();
  auto& dev = runtime_->device(s.device_id);
  std::lock_guard lk(dev.mu);
  return s.counters;
}

void OffloadStream::clear_request_log() {
  auto& s = state();
  auto& dev = runtime_->device(s.device_id);
  std::lock_guard lk(dev.mu);
  s.log.clear();
}

std::size_t OffloadStream::log_limit() const {
  auto& s = state();
  auto& dev = runtime_->device(s.device_id);
  std::lock_guard lk(dev.mu);
  return s.log_limit;
}

void OffloadStream::set_log_limit(std::size_t limit) {
  auto& s = state();
  auto& dev = runtime_->device(s.device_id);
  std::lock_guard lk(dev.mu);
  s.log_limit = limit;
  while (s.log.size() > limit) {
    s.log.pop_front();
  }
}

// --- OffloadArray ----------------------------------------------------------

std::size_t OffloadArray::size() const noexcept {
  std::size_t n = 1;
  for (auto e : shape_) {
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

void OffloadArray::update_device() {
  if (!host_) {
    throw Error(Errc::invalid_state, "offload array has no host binding");
  }
  auto& s = stream_.state();
  std::vector<Request> batch;
  batch.push_back(make_transfer(RequestKind::transfer_h2d,
                                RequestRole::update_device, nbytes(),
                                host_endpoint(*host_), view_of(device_ptr_), 0,
                                0));
  stream_.runtime_->device(s.device_id).enqueue(s, std::move(batch));
}

void OffloadArray::update_host() {
  if (!host_) {
    throw Error(Errc::invalid_state, "offload array has no host binding");
  }
  auto& s = stream_.state();
  std::vector<Request> batch;
  batch.push_back(make_transfer(RequestKind::transfer_d2h,
                                RequestRole::update_host, nbytes(),
                                view_of(device_ptr_), host_endpoint(*host_), 0,
                                0));
  stream_.runtime_->device(s.device_id).enqueue(s, std::move(batch));
}

namespace {

std::string kernel_name(const char* op, DType t) {
  return std::string(op) + "_" + std::string(to_string(t));
}

}  // namespace

void OffloadArray::zero() {
  auto& s = stream_.state();
  auto lib = stream_.runtime_->device(s.device_id).elementwise_library();
  stream_.invoke(lib.get_kernel(kernel_name("zero", dtype_)),
                 {device_ptr_, static_cast<std::int64_t>(size())});
}

void OffloadArray::fill_impl(const KernelArg& value) {
  auto& s = stream_.state();
  auto lib = stream_.runtime_->device(s.device_id).elementwise_library();
  stream_.invoke(lib.get_kernel(kernel_name("fill", dtype_)),
                 {device_ptr_, static_cast<std::int64_t>(size()), value});
}

void OffloadArray::fill(std::int64_t value) {
  switch (dtype_) {
    case DType::i64: fill_impl(value); break;
    case DType::c128:
      fill_impl(std::complex<double>(static_cast<double>(value), 0.0));
      break;
    default: fill_impl(static_cast<double>(value)); break;
  }
}

void OffloadArray::fill(double value) {
  switch (dtype_) {
    case DType::i64: fill_impl(static_cast<std::int64_t>(value)); break;
    case DType::c128: fill_impl(std::complex<double>(value, 0.0)); break;
    default: fill_impl(value); break;
  }
}

void OffloadArray::fill(std::complex<double> value) {
  if (dtype_ != DType::c128) {
    throw Error(Errc::invalid_argument,
                "complex fill value for a " + std::string(to_string(dtype_)) +
                    " array");
  }
  fill_impl(value);
}

void OffloadArray::binary_op(const char* op, const OffloadArray& other) {
  if (!other || other.dtype_ != dtype_ || other.shape_ != shape_) {
    throw Error(Errc::invalid_argument,
                std::string(op) + ": operands differ in dtype or shape");
  }
  if (other.device_ptr_.device_id() != device_ptr_.device_id()) {
    throw Error(Errc::invalid_argument,
                std::string(op) + ": operands live on different devices");
  }
  auto& s = stream_.state();
  auto lib = stream_.runtime_->device(s.device_id).elementwise_library();
  stream_.invoke(lib.get_kernel(kernel_name(op, dtype_)),
                 {device_ptr_, other.device_ptr_,
                  static_cast<std::int64_t>(size())});
}

void OffloadArray::add(const OffloadArray& other) { binary_op("add", other); }

void OffloadArray::multiply(const OffloadArray& other) {
  binary_op("multiply", other);
}

}  // namespace streamforge

namespace streamforge::detail {

KernelLibrary DeviceCore::elementwise_library() {
  std::lock_guard lk(lib_mu);
  if (!elementwise_lib) {
    std::shared_ptr<LibraryImpl> impl;
    {
      std::lock_guard rk(runtime->registry_mu);
      impl = runtime->intrinsics.at(kBuiltinElementwise);
    }
    elementwise_lib = KernelLibrary(runtime->next_library_id.fetch_add(1), id,
                                    std::move(impl));
  }
  return *elementwise_lib;
}

}  // namespace streamforge::detail
