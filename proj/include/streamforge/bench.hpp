#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamforge/runtime.hpp"
#include "streamforge/types.hpp"

namespace streamforge {

/// FLOPs per time step of the large three-dimensional reference case, printed
/// next to the desk-scale estimate for context.
inline constexpr double kReferenceCaseFlopsPerStep = 4.6e11;

struct BenchRecord {
  std::string benchmark;
  std::size_t size = 0;  // bytes, or matrix dimension for GEMM
  int reps = 0;
  double median_seconds = 0.0;
  double metric = 0.0;  // GB/s or GFLOP/s
};

/// Median of a non-empty sample (mean of the middle pair for even sizes).
double median(std::vector<double> samples);

/// min, min*factor, ... while <= max (each rounded down, strictly
/// increasing). Throws Error(invalid_argument) unless 1 <= min <= max and
/// factor > 1.
std::vector<std::size_t> geometric_sizes(std::size_t min_bytes,
                                         std::size_t max_bytes, double factor);

struct TransferBenchOptions {
  std::size_t min_bytes = 1024;
  std::size_t max_bytes = std::size_t{64} << 20;
  double factor = 2.0;
  int reps = 5;
  int device_id = 0;
};

/// Per size, the median over reps of three paths: "copyin" (h2d into an
/// existing buffer), "copyout" (d2h) and "bind" (allocate + h2d). Durations
/// are the runtime's per-request times: modeled when the device has a timing
/// model, measured otherwise. Metric is GB/s (1e9 bytes).
std::vector<BenchRecord> bench_transfer(Runtime& runtime,
                                        const TransferBenchOptions& options);

struct GemmBenchOptions {
  std::vector<std::int64_t> sizes = {64, 128, 256, 512};
  int reps = 3;
  Precision precision = Precision::f64;
  int device_id = 0;
};

/// Square GEMM C = A*B (alpha 1, beta 0) through builtin-gemm, invoked with
/// raw host arrays. Per size: "gemm_kernel" is the kernel request alone,
/// "gemm_incl_transfers" the same invoke including its staging and copies.
/// Each size is first checked against a triple-loop product on its leading
/// 64x64 block; a mismatch throws Error(kernel_failure). Metric is
/// 2n^3/t GFLOP/s.
std::vector<BenchRecord> bench_gemm(Runtime& runtime,
                                    const GemmBenchOptions& options);

/// `benchmark,size,reps,median_seconds,metric`
void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records);
void write_bench_csv(const std::filesystem::path& path,
                     const std::vector<BenchRecord>& records);

}  // namespace streamforge
