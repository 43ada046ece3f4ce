#pragma once

// Internal state shared by the runtime translation units.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include "streamforge/arena.hpp"
#include "streamforge/device_config.hpp"
#include "streamforge/error.hpp"
#include "streamforge/kernel.hpp"
#include "streamforge/request.hpp"

namespace streamforge::detail {

struct DeviceCore;
struct RuntimeCore;
struct StreamState;

struct AllocationState {
  std::uint64_t alloc_id = 0;
  int device_id = 0;
  std::size_t length = 0;
  std::size_t alignment = 64;
  std::weak_ptr<StreamState> owner;
  // Runtime-managed staging buffers are released by their own dealloc.
  bool auto_release = true;
  std::atomic<bool> released{false};
  std::atomic<std::int64_t> base{-1};

  ~AllocationState();
};

struct DeviceView {
  std::shared_ptr<AllocationState> alloc;
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct HostEndpoint {
  std::byte* data = nullptr;
  std::size_t length = 0;
  bool writable = true;
  // Scalar encodings staged by invoke live inside the request.
  std::shared_ptr<std::vector<std::byte>> owned;
};

using Endpoint = std::variant<HostEndpoint, DeviceView>;

struct AllocOp {
  std::shared_ptr<AllocationState> alloc;
};
struct DeallocOp {
  std::uint64_t alloc_id = 0;
  bool quiet = false;  // not-live is not an error
};
struct TransferOp {
  Endpoint src;
  Endpoint dst;
  std::size_t offset_src = 0;
  std::size_t offset_dst = 0;
};
struct InvokeOp {
  std::shared_ptr<const KernelImpl> kernel;
  std::vector<DeviceView> args;
};

using Payload = std::variant<AllocOp, DeallocOp, TransferOp, InvokeOp>;

struct Request {
  std::uint64_t seq = 0;
  RequestKind kind = RequestKind::alloc;
  RequestRole role = RequestRole::user;
  std::size_t nbytes = 0;
  std::string label;
  Payload payload;
  // Runtime-generated deallocs still run after a failure so staging and
  // auto-released buffers never leak.
  bool runs_after_failure = false;
};

struct StreamState {
  std::uint64_t id = 0;
  int device_id = 0;
  std::atomic<DeviceCore*> device{nullptr};

  // Everything below is guarded by the owning device's mutex.
  std::deque<Request> pending;
  std::uint64_t last_seq = 0;
  std::uint64_t completed_seq = 0;
  bool running = false;
  bool poisoned = false;
  std::optional<Error> error_slot;

  std::deque<RequestRecord> log;
  std::size_t log_limit = std::size_t{1} << 20;
  RequestCounters counters;
};

struct KernelImpl {
  std::string name;
  IntrinsicKernel intrinsic;        // set for intrinsic kernels
  void* native = nullptr;           // set for native symbols
  std::shared_ptr<LibraryImpl> library;  // keeps a native module loaded

  void call(std::span<void* const> args) const;
};

struct LibraryImpl {
  std::string name;
  LibrarySource source = LibrarySource::intrinsic_registry;
  IntrinsicKernelMap kernels;
  void* dl_handle = nullptr;

  std::mutex mu;
  std::unordered_map<std::string, std::shared_ptr<const KernelImpl>> resolved;

  ~LibraryImpl();
};

struct DeviceCore {
  DeviceCore(RuntimeCore* runtime, int id, const DeviceConfig& config);
  ~DeviceCore();

  void start();
  /// Drains every queue, then stops the executor.
  void shutdown();

  std::shared_ptr<StreamState> new_stream();
  std::shared_ptr<StreamState> default_stream();

  /// Appends requests contiguously, assigning sequence numbers.
  void enqueue(StreamState& stream, std::vector<Request> batch);
  void sync(StreamState& stream);
  bool idle(const StreamState& stream) const;

  std::size_t bytes_in_use() const;
  std::size_t live_allocations() const;
  bool audit_arena() const;
  DeviceConfig config_snapshot() const;
  void reconfigure(std::size_t arena_bytes, std::optional<TimingModel> timing,
                   bool realistic);

  KernelLibrary elementwise_library();

  /// Executes one request against the arena; returns the failure, if any.
  std::optional<Error> execute(Request& request, double& seconds,
                               const std::optional<TimingModel>& timing);

  RuntimeCore* runtime;
  int id;
  std::string name;

  mutable std::mutex mu;
  std::condition_variable work_cv;
  std::condition_variable done_cv;
  std::vector<std::shared_ptr<StreamState>> streams;
  std::shared_ptr<StreamState> default_stream_;
  std::size_t rr_cursor = 0;
  bool stopping = false;
  DeviceConfig config;  // guarded by mu

  mutable std::mutex arena_mu;
  std::unique_ptr<Arena> arena;

  std::mutex lib_mu;
  std::optional<KernelLibrary> elementwise_lib;

  std::thread worker;

 private:
  void worker_loop();
  StreamState* next_ready_stream();
};

struct RuntimeCore {
  explicit RuntimeCore(int n_devices, const DeviceConfig& config);
  ~RuntimeCore();

  DeviceCore& device(int id);

  std::vector<std::unique_ptr<DeviceCore>> devices;

  std::mutex registry_mu;
  std::unordered_map<std::string, std::shared_ptr<LibraryImpl>> intrinsics;

  std::atomic<std::uint64_t> next_alloc_id{1};
  std::atomic<std::uint64_t> next_stream_id{1};
  std::atomic<std::uint64_t> next_library_id{1};
};

}  // namespace streamforge::detail
