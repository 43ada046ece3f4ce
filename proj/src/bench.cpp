#include "streamforge/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>

#include "streamforge/error.hpp"

namespace streamforge {

namespace {

void check_reps(int reps) {
  if (reps < 3) {
    throw Error(Errc::invalid_argument,
                "at least 3 repetitions are required, got " +
                    std::to_string(reps));
  }
}

// Seconds of the logged requests matching `pred`; the log is cleared first
// by the caller.
template <typename Pred>
double logged_seconds(const OffloadStream& stream, Pred pred) {
  double total = 0.0;
  for (const auto& r : stream.request_log()) {
    if (pred(r)) total += r.seconds;
  }
  return total;
}

template <typename T>
void verify_block(const std::vector<T>& A, const std::vector<T>& B,
                  const std::vector<T>& C, std::int64_t n) {
  const std::int64_t b = std::min<std::int64_t>(n, 64);
  double err = 0.0, norm = 0.0;
  for (std::int64_t i = 0; i < b; ++i) {
    for (std::int64_t j = 0; j < b; ++j) {
      double ref = 0.0;
      for (std::int64_t k = 0; k < n; ++k) {
        ref += static_cast<double>(A[static_cast<std::size_t>(i * n + k)]) *
               static_cast<double>(B[static_cast<std::size_t>(k * n + j)]);
      }
      const double d = static_cast<double>(C[static_cast<std::size_t>(i * n + j)]) - ref;
      err += d * d;
      norm += ref * ref;
    }
  }
  const double tol = std::is_same_v<T, double> ? 1e-12 : 1e-5;
  if (!(std::sqrt(err) <= tol * std::sqrt(norm))) {
    throw Error(Errc::kernel_failure,
                "GEMM result for n=" + std::to_string(n) +
                    " disagrees with the reference loop");
  }
}

template <typename T>
void gemm_size(Runtime& runtime, const GemmBenchOptions& o, std::int64_t n,
               std::vector<BenchRecord>& out) {
  auto stream = runtime.create_stream(o.device_id);
  const char* kernel_name = std::is_same_v<T, double> ? "mydgemm" : "mysgemm";
  auto gemm = runtime.device(o.device_id)
                  .load_library(kBuiltinGemm)
                  .get_kernel(kernel_name);
  const auto nn = static_cast<std::size_t>(n * n);
  std::vector<T> A(nn), B(nn), C(nn, T(0));
  std::mt19937_64 rng(static_cast<std::uint64_t>(n));
  std::uniform_real_distribution<double> dist(-1, 1);
  for (auto& v : A) v = static_cast<T>(dist(rng));
  for (auto& v : B) v = static_cast<T>(dist(rng));
  auto view = [n](std::vector<T>& v) {
    return HostArray::from(std::span<T>(v), {n, n});
  };

  auto dA = stream.bind(view(A));
  auto dB = stream.bind(view(B));
  auto dC = stream.bind(view(C), false);
  stream.invoke(gemm, {dA, dB, dC, n, n, n, 1.0, 0.0});
  dC.update_host();
  stream.sync();
  verify_block(A, B, C, n);

  const double flops = 2.0 * static_cast<double>(n) * static_cast<double>(n) *
                       static_cast<double>(n);
  // Both figures come from the same invoke, the kernel time being one of
  // the requests the full time sums over.
  std::vector<double> kernel, full;
  for (int r = 0; r < o.reps; ++r) {
    stream.clear_request_log();
    stream.invoke(gemm, {view(A), view(B), view(C), n, n, n, 1.0, 0.0});
    stream.sync();
    kernel.push_back(logged_seconds(stream, [](const RequestRecord& rec) {
      return rec.kind == RequestKind::invoke;
    }));
    full.push_back(logged_seconds(stream, [](const RequestRecord&) {
      return true;
    }));
  }
  const double tk = median(kernel), tf = median(full);
  const auto size = static_cast<std::size_t>(n);
  out.push_back({"gemm_kernel", size, o.reps, tk, flops / tk * 1e-9});
  out.push_back({"gemm_incl_transfers", size, o.reps, tf, flops / tf * 1e-9});
}

}  // namespace

double median(std::vector<double> samples) {
  if (samples.empty()) {
    throw Error(Errc::invalid_argument, "median of an empty sample");
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t m = samples.size() / 2;
  return samples.size() % 2 ? samples[m] : (samples[m - 1] + samples[m]) / 2;
}

std::vector<std::size_t> geometric_sizes(std::size_t min_bytes,
                                         std::size_t max_bytes, double factor) {
  if (min_bytes < 1 || min_bytes > max_bytes) {
    throw Error(Errc::invalid_argument,
                "size range needs 1 <= min <= max");
  }
  if (!(factor > 1.0)) {
    throw Error(Errc::invalid_argument, "size factor must exceed 1");
  }
  std::vector<std::size_t> out;
  double s = static_cast<double>(min_bytes);
  while (s <= static_cast<double>(max_bytes)) {
    const auto v = static_cast<std::size_t>(s);
    if (out.empty() || v > out.back()) out.push_back(v);
    s *= factor;
  }
  return out;
}

std::vector<BenchRecord> bench_transfer(Runtime& runtime,
                                        const TransferBenchOptions& o) {
  check_reps(o.reps);
  const auto sizes = geometric_sizes(o.min_bytes, o.max_bytes, o.factor);
  auto stream = runtime.create_stream(o.device_id);
  std::vector<std::byte> host(sizes.back(), std::byte{0x5A});
  auto target = stream.allocate_device_memory(sizes.back());
  const auto is_transfer = [](const RequestRecord& r) {
    return r.kind == RequestKind::transfer_h2d ||
           r.kind == RequestKind::transfer_d2h;
  };

  std::vector<BenchRecord> out;
  for (std::size_t size : sizes) {
    const HostBufferRef buf{host.data(), size, true};
    std::vector<double> in, back, bound;
    for (int r = 0; r < o.reps; ++r) {
      stream.clear_request_log();
      stream.transfer_host2device(buf, target, size);
      stream.sync();
      in.push_back(logged_seconds(stream, is_transfer));

      stream.clear_request_log();
      stream.transfer_device2host(target, buf, size);
      stream.sync();
      back.push_back(logged_seconds(stream, is_transfer));

      stream.clear_request_log();
      {
        // The allocation is part of what bind costs.
        auto fresh = stream.allocate_device_memory(size);
        stream.transfer_host2device(buf, fresh, size);
        stream.sync();
        bound.push_back(logged_seconds(stream, [](const RequestRecord& rec) {
          return rec.kind != RequestKind::dealloc;
        }));
      }
      stream.sync();
    }
    const double bytes = static_cast<double>(size);
    for (auto [name, samples] :
         {std::pair{"copyin", &in}, {"copyout", &back}, {"bind", &bound}}) {
      const double t = median(*samples);
      out.push_back({name, size, o.reps, t, bytes / t * 1e-9});
    }
  }
  return out;
}

std::vector<BenchRecord> bench_gemm(Runtime& runtime,
                                    const GemmBenchOptions& o) {
  check_reps(o.reps);
  if (o.sizes.empty()) {
    throw Error(Errc::invalid_argument, "no GEMM sizes given");
  }
  for (auto n : o.sizes) {
    if (n < 16) {
      throw Error(Errc::invalid_argument,
                  "GEMM sizes must be at least 16, got " + std::to_string(n));
    }
  }
  std::vector<BenchRecord> out;
  for (auto n : o.sizes) {
    if (o.precision == Precision::f64) {
      gemm_size<double>(runtime, o, n, out);
    } else {
      gemm_size<float>(runtime, o, n, out);
    }
  }
  return out;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  out << "benchmark,size,reps,median_seconds,metric\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%d,%.9g,%.9g\n", r.benchmark.c_str(),
                  r.size, r.reps, r.median_seconds, r.metric);
    out << buf;
  }
}

void write_bench_csv(const std::filesystem::path& path,
                     const std::vector<BenchRecord>& records) {
  std::ofstream out(path);
  if (!out) {
    throw Error(Errc::io_error, "cannot write '" + path.string() + "'");
  }
  write_bench_csv(out, records);
  out.flush();
  if (!out) {
    throw Error(Errc::io_error, "write to '" + path.string() + "' failed");
  }
}

}  // namespace streamforge
