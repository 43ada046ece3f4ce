#include <chrono>
#include <cstring>
#include <exception>

#include "detail.hpp"

namespace streamforge::detail {

namespace {

using Clock = std::chrono::steady_clock;

// A resolved byte range on some device.
struct DeviceRange {
  DeviceCore* device = nullptr;
  std::byte* address = nullptr;
};

// Looks up a live allocation and bounds-checks [offset, offset + nbytes)
// against the view. Caller must not hold the owning device's arena_mu.
DeviceRange resolve(RuntimeCore& runtime, const DeviceView& view,
                    std::size_t offset, std::size_t nbytes) {
  DeviceCore& dev = runtime.device(view.alloc->device_id);
  std::lock_guard lk(dev.arena_mu);
  const Arena::Block* block = dev.arena->find(view.alloc->alloc_id);
  if (block == nullptr) {
    throw Error(Errc::invalid_handle,
                "allocation " + std::to_string(view.alloc->alloc_id) +
                    " is not live on device " + std::to_string(dev.id));
  }
  if (offset > view.length || nbytes > view.length - offset) {
    throw Error(Errc::range_error,
                "access of " + std::to_string(nbytes) + " bytes at offset " +
                    std::to_string(offset) + " exceeds device buffer of " +
                    std::to_string(view.length) + " bytes");
  }
  return {&dev, dev.arena->data() + block->offset + view.offset + offset};
}

RequestRecord* find_record(StreamState& stream, std::uint64_t seq) {
  if (stream.log.empty() || stream.log.front().seq > seq) {
    return nullptr;
  }
  const auto index = seq - stream.log.front().seq;
  return index < stream.log.size() ? &stream.log[index] : nullptr;
}

std::byte* resolve_host(const HostEndpoint& host, std::size_t offset,
                        std::size_t nbytes, bool write) {
  if (offset > host.length || nbytes > host.length - offset) {
    throw Error(Errc::range_error,
                "access of " + std::to_string(nbytes) + " bytes at offset " +
                    std::to_string(offset) + " exceeds host buffer of " +
                    std::to_string(host.length) + " bytes");
  }
  if (write && !host.writable) {
    throw Error(Errc::invalid_argument, "host destination is read-only");
  }
  return host.data + offset;
}

}  // namespace

AllocationState::~AllocationState() {
  if (!auto_release || released.load()) {
    return;
  }
  auto stream = owner.lock();
  if (!stream) {
    return;
  }
  DeviceCore* dev = stream->device.load();
  if (dev == nullptr) {
    return;
  }
  Request req;
  req.kind = RequestKind::dealloc;
  req.role = RequestRole::auto_release;
  req.nbytes = length;
  req.payload = DeallocOp{alloc_id, true};
  req.runs_after_failure = true;
  std::vector<Request> batch;
  batch.push_back(std::move(req));
  try {
    dev->enqueue(*stream, std::move(batch));
  } catch (...) {
    // Device shutting down; the arena goes away with it.
  }
}

DeviceCore::DeviceCore(RuntimeCore* rt, int device_id,
                       const DeviceConfig& cfg)
    : runtime(rt),
      id(device_id),
      name("emulated:" + std::to_string(device_id)),
      config(cfg),
      arena(std::make_unique<Arena>(cfg.arena_bytes)) {}

void DeviceCore::start() {
  worker = std::thread([this] { worker_loop(); });
}

void DeviceCore::shutdown() {
  {
    std::lock_guard lk(mu);
    stopping = true;
  }
  work_cv.notify_all();
  if (worker.joinable()) {
    worker.join();
  }
}

DeviceCore::~DeviceCore() {
  shutdown();
  std::vector<std::shared_ptr<StreamState>> all;
  {
    std::lock_guard lk(mu);
    all = std::move(streams);
    default_stream_.reset();
    for (auto& s : all) {
      s->device.store(nullptr);
    }
  }
  // Queues are empty after the drain; release what is left outside the lock.
  all.clear();
}

std::shared_ptr<StreamState> DeviceCore::new_stream() {
  auto s = std::make_shared<StreamState>();
  s->id = runtime->next_stream_id.fetch_add(1);
  s->device_id = id;
  s->device.store(this);
  std::lock_guard lk(mu);
  streams.push_back(s);
  return s;
}

std::shared_ptr<StreamState> DeviceCore::default_stream() {
  {
    std::lock_guard lk(mu);
    if (default_stream_) {
      return default_stream_;
    }
  }
  auto s = new_stream();
  std::lock_guard lk(mu);
  if (!default_stream_) {
    default_stream_ = s;
  }
  return default_stream_;
}

void DeviceCore::enqueue(StreamState& stream, std::vector<Request> batch) {
  {
    std::lock_guard lk(mu);
    if (stopping) {
      throw Error(Errc::invalid_state, "device is shutting down");
    }
    for (auto& req : batch) {
      req.seq = ++stream.last_seq;
      RequestRecord rec;
      rec.seq = req.seq;
      rec.kind = req.kind;
      rec.role = req.role;
      rec.nbytes = req.nbytes;
      rec.label = req.label;
      stream.log.push_back(std::move(rec));
      if (stream.log.size() > stream.log_limit) {
        stream.log.pop_front();
      }
      auto& c = stream.counters;
      ++c.by_kind[static_cast<std::size_t>(req.kind)];
      ++c.by_role[static_cast<std::size_t>(req.role)];
      const bool host_side = req.kind == RequestKind::transfer_h2d ||
                             req.kind == RequestKind::transfer_d2h;
      if (host_side && req.role != RequestRole::scalar_copy_in) {
        ++c.host_array_transfers;
      }
      stream.pending.push_back(std::move(req));
    }
  }
  work_cv.notify_one();
}

void DeviceCore::sync(StreamState& stream) {
  std::optional<Error> err;
  {
    std::unique_lock lk(mu);
    done_cv.wait(lk, [&] {
      return stream.completed_seq == stream.last_seq || stopping;
    });
    err = std::move(stream.error_slot);
    stream.error_slot.reset();
    stream.poisoned = false;
  }
  if (err) {
    throw *err;
  }
}

bool DeviceCore::idle(const StreamState& stream) const {
  std::lock_guard lk(mu);
  return stream.completed_seq == stream.last_seq;
}

StreamState* DeviceCore::next_ready_stream() {
  const std::size_t n = streams.size();
  for (std::size_t i = 0; i < n; ++i) {
    StreamState* s = streams[(rr_cursor + i) % n].get();
    if (!s->pending.empty()) {
      rr_cursor = (rr_cursor + i + 1) % n;
      return s;
    }
  }
  return nullptr;
}

void DeviceCore::worker_loop() {
  for (;;) {
    Request req;
    StreamState* stream = nullptr;
    bool skip = false;
    DeviceConfig cfg;
    {
      std::unique_lock lk(mu);
      work_cv.wait(lk, [&] {
        if (stopping) {
          return true;
        }
        for (const auto& s : streams) {
          if (!s->pending.empty()) {
            return true;
          }
        }
        return false;
      });
      stream = next_ready_stream();
      if (stream == nullptr) {
        if (stopping) {
          return;
        }
        continue;
      }
      req = std::move(stream->pending.front());
      stream->pending.pop_front();
      stream->running = true;
      skip = stream->poisoned && !req.runs_after_failure;
      if (auto* rec = find_record(*stream, req.seq)) {
        rec->status = RequestStatus::running;
      }
      cfg = config;
    }

    std::optional<Error> err;
    double seconds = 0.0;
    if (!skip) {
      err = execute(req, seconds, cfg.timing);
      if (cfg.timing && cfg.realistic_timing &&
          req.kind != RequestKind::invoke) {
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
      }
    }
    // Drop payload references before completion becomes visible, so any
    // auto-release they trigger is enqueued ahead of a concurrent sync.
    req.payload = AllocOp{};

    {
      std::lock_guard lk(mu);
      stream->completed_seq = req.seq;
      stream->running = false;
      const bool failed = skip || err.has_value();
      if (auto* rec = find_record(*stream, req.seq)) {
        rec->status = failed ? RequestStatus::failed : RequestStatus::done;
        rec->seconds = seconds;
      }
      if (err && !stream->error_slot) {
        stream->error_slot = err->with_seq(req.seq);
      }
      if (err) {
        stream->poisoned = true;
      }
    }
    done_cv.notify_all();
  }
}

std::optional<Error> DeviceCore::execute(
    Request& req, double& seconds, const std::optional<TimingModel>& timing) {
  const auto started = Clock::now();
  try {
    std::visit(
        [&](auto& op) {
          using Op = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<Op, AllocOp>) {
            auto& a = *op.alloc;
            std::lock_guard lk(arena_mu);
            auto offset = arena->allocate(a.alloc_id, a.length, a.alignment);
            if (!offset) {
              throw Error(Errc::out_of_device_memory,
                          "cannot allocate " + std::to_string(a.length) +
                              " bytes on device " + std::to_string(id) +
                              " (" + std::to_string(arena->bytes_in_use()) +
                              " of " + std::to_string(arena->capacity()) +
                              " bytes in use)");
            }
            a.base.store(static_cast<std::int64_t>(*offset));
          } else if constexpr (std::is_same_v<Op, DeallocOp>) {
            std::lock_guard lk(arena_mu);
            if (!arena->release(op.alloc_id) && !op.quiet) {
              throw Error(Errc::invalid_handle,
                          "allocation " + std::to_string(op.alloc_id) +
                              " is not live (double free?)");
            }
          } else if constexpr (std::is_same_v<Op, TransferOp>) {
            const std::size_t n = req.nbytes;
            if (n == 0) {
              return;
            }
            const auto* hs = std::get_if<HostEndpoint>(&op.src);
            const auto* hd = std::get_if<HostEndpoint>(&op.dst);
            const auto* ds = std::get_if<DeviceView>(&op.src);
            const auto* dd = std::get_if<DeviceView>(&op.dst);
            if (hs && dd) {
              const std::byte* from = resolve_host(*hs, op.offset_src, n, false);
              auto to = resolve(*runtime, *dd, op.offset_dst, n);
              std::memcpy(to.address, from, n);
            } else if (ds && hd) {
              auto from = resolve(*runtime, *ds, op.offset_src, n);
              std::byte* to = resolve_host(*hd, op.offset_dst, n, true);
              std::memcpy(to, from.address, n);
            } else if (ds && dd) {
              auto from = resolve(*runtime, *ds, op.offset_src, n);
              auto to = resolve(*runtime, *dd, op.offset_dst, n);
              if (from.device == to.device) {
                std::memcpy(to.address, from.address, n);
              } else {
                // Staged through host memory: device -> host -> device.
                std::vector<std::byte> staging(n);
                std::memcpy(staging.data(), from.address, n);
                std::memcpy(to.address, staging.data(), n);
              }
            } else {
              throw Error(Errc::invalid_argument, "host-to-host transfer");
            }
          } else if constexpr (std::is_same_v<Op, InvokeOp>) {
            std::vector<void*> addresses;
            addresses.reserve(op.args.size());
            for (const auto& view : op.args) {
              addresses.push_back(resolve(*runtime, view, 0, view.length).address);
            }
            try {
              op.kernel->call(addresses);
            } catch (const Error&) {
              throw;
            } catch (const std::exception& e) {
              throw Error(Errc::kernel_failure,
                          "kernel '" + op.kernel->name + "' failed: " + e.what());
            } catch (...) {
              throw Error(Errc::kernel_failure,
                          "kernel '" + op.kernel->name + "' failed");
            }
          }
        },
        req.payload);
  } catch (const Error& e) {
    seconds = std::chrono::duration<double>(Clock::now() - started).count();
    return e;
  }
  const double wall =
      std::chrono::duration<double>(Clock::now() - started).count();
  if (timing && req.kind != RequestKind::invoke) {
    const bool is_transfer = req.kind == RequestKind::transfer_h2d ||
                             req.kind == RequestKind::transfer_d2h ||
                             req.kind == RequestKind::transfer_d2d;
    seconds = is_transfer ? timing->transfer_seconds(req.nbytes)
                          : timing->request_seconds();
  } else {
    seconds = wall;
  }
  return std::nullopt;
}

std::size_t DeviceCore::bytes_in_use() const {
  std::lock_guard lk(arena_mu);
  return arena->bytes_in_use();
}

std::size_t DeviceCore::live_allocations() const {
  std::lock_guard lk(arena_mu);
  return arena->live_count();
}

bool DeviceCore::audit_arena() const {
  std::lock_guard lk(arena_mu);
  return arena->audit();
}

DeviceConfig DeviceCore::config_snapshot() const {
  std::lock_guard lk(mu);
  return config;
}

void DeviceCore::reconfigure(std::size_t arena_bytes,
                             std::optional<TimingModel> timing,
                             bool realistic) {
  if (arena_bytes == 0) {
    throw Error(Errc::invalid_argument, "arena size must be positive");
  }
  if (timing && timing->bandwidth_bytes_per_s <= 0) {
    throw Error(Errc::invalid_argument, "timing model bandwidth must be positive");
  }
  std::lock_guard lk(mu);
  for (const auto& s : streams) {
    if (s->completed_seq != s->last_seq) {
      throw Error(Errc::invalid_state,
                  "device " + std::to_string(id) + " has queued requests");
    }
  }
  std::lock_guard alk(arena_mu);
  if (arena->live_count() != 0) {
    throw Error(Errc::invalid_state,
                "device " + std::to_string(id) + " has " +
                    std::to_string(arena->live_count()) + " live allocations");
  }
  if (arena_bytes != arena->capacity()) {
    arena = std::make_unique<Arena>(arena_bytes);
  }
  config.arena_bytes = arena_bytes;
  config.timing = timing;
  config.realistic_timing = realistic;
}

RuntimeCore::RuntimeCore(int n_devices, const DeviceConfig& config) {
  if (n_devices < 1) {
    n_devices = 1;
  }
  for (auto& [name, kernels] : builtin_intrinsic_libraries()) {
    auto lib = std::make_shared<LibraryImpl>();
    lib->name = name;
    lib->kernels = std::move(kernels);
    intrinsics.emplace(name, std::move(lib));
  }
  devices.reserve(static_cast<std::size_t>(n_devices));
  for (int i = 0; i < n_devices; ++i) {
    devices.push_back(std::make_unique<DeviceCore>(this, i, config));
  }
  for (auto& d : devices) {
    d->start();
  }
}

RuntimeCore::~RuntimeCore() {
  // Drain every executor before any device state goes away; a queued
  // cross-device copy may still touch another device's arena.
  for (auto& d : devices) {
    d->shutdown();
  }
  devices.clear();
}

DeviceCore& RuntimeCore::device(int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= devices.size()) {
    throw Error(Errc::device_not_found,
                "no device with id " + std::to_string(id));
  }
  return *devices[static_cast<std::size_t>(id)];
}

}  // namespace streamforge::detail
