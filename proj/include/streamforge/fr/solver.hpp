#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "streamforge/fr/config.hpp"
#include "streamforge/fr/operators.hpp"
#include "streamforge/offload_array.hpp"
#include "streamforge/request.hpp"
#include "streamforge/runtime.hpp"

namespace streamforge::fr {

struct Diagnostic {
  std::int64_t step = 0;
  double t = 0.0;
  // Against the exact translated initial condition; NaN with a source term.
  double l2_error = 0.0;
  double relative_l2_error = 0.0;
  // Sum over elements and solution points of w_j * u * h/2.
  double conserved_integral = 0.0;
};

/// Advection solver whose state and all stepping work live on one stream.
///
/// The state u is an OffloadArray of shape (n_elements, p+1), element-major
/// with solution points fastest, bound to a host copy that is refreshed only
/// by the explicit download methods. Operator matrices, geometry, face
/// buffers and step constants are allocated as one block per family and
/// sliced.
class Solver {
 public:
  Solver(Runtime& runtime, OffloadStream stream, SolverConfig config);
  ~Solver();
  Solver(Solver&&) noexcept;
  Solver& operator=(Solver&&) noexcept;

  const SolverConfig& config() const noexcept;
  const FROperators& operators() const noexcept;
  const OffloadStream& stream() const noexcept;
  const OffloadArray& state() const noexcept;

  /// Physical coordinates of the solution points, shape (n_elements, p+1).
  const std::vector<double>& solution_points() const noexcept;

  double time() const noexcept;
  std::int64_t step_count() const noexcept;
  /// GEMM invocations enqueued so far.
  std::uint64_t gemm_invokes() const noexcept;

  /// Uploads the configured initial condition and resets the clock.
  void set_initial_condition();
  /// Uploads `u` (n_elements*(p+1) values) and resets the clock.
  void set_solution(std::span<const double> u);

  /// Enqueues n RK4 steps. Non-finite values are detected on the device and
  /// reported by check_finite() or diagnostic().
  void advance(std::int64_t n = 1);

  /// Throws Error(numerical_divergence) naming the first bad step.
  void check_finite();

  /// Copies the state to the host (syncing the stream).
  std::vector<double> solution();

  /// Face values of the current state, shape (n_elements, 2): one GEMM.
  std::vector<double> face_values();

  /// du/dt of the current state at time t, shape (n_elements, p+1).
  std::vector<double> rhs(double t);

  /// Downloads the state when it has changed since the last download,
  /// checks finiteness and evaluates the diagnostics on the host.
  Diagnostic diagnostic();

  /// Device-side right-hand side used by the integrator.
  void enqueue_rhs(const DevicePointer& u, double t, const DevicePointer& dudt);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Host-side diagnostics of a state vector.
double conserved_integral(const FROperators& ops, double h,
                          std::span<const double> u);

struct RequestSummary {
  RequestCounters counters;              // everything the run enqueued
  std::uint64_t step_host_array_transfers = 0;  // enqueued by step calls
  std::uint64_t gemm_invokes = 0;
  std::uint64_t total_requests = 0;
};

struct SimulationResult {
  SolverConfig config;
  std::vector<double> u;  // final state, (n_elements, p+1)
  std::vector<double> x;  // solution point coordinates
  double t = 0.0;
  double dt = 0.0;  // t_end / steps, at most config.dt
  std::int64_t steps = 0;
  std::vector<Diagnostic> diagnostics;
  double wall_seconds = 0.0;
  RequestSummary requests;
};

/// Runs config.t_end in ceil(t_end / dt) equal steps on a fresh stream of
/// `device_id`. Throws Error(numerical_divergence) on non-finite values.
SimulationResult run_simulation(const SolverConfig& config,
                                Runtime& runtime = Runtime::global(),
                                int device_id = 0);

/// `step,t,l2_error,conserved_integral`
void write_diagnostics_csv(std::ostream& out,
                           const std::vector<Diagnostic>& diagnostics);
void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<Diagnostic>& diagnostics);

/// Modeled floating-point operations of one RK4 step: the three GEMMs per
/// stage at 2mnk each plus the counted point-wise arithmetic.
double flops_per_step(int p, std::int64_t n_elements);

struct ConvergenceRow {
  int p = 0;
  std::int64_t n_elements = 0;
  double l2_error = 0.0;
  double order = 0.0;  // NaN for the coarsest mesh
};

/// Final-time L2 errors over the given meshes for each order, with the
/// observed order log2(e_coarse / e_fine) between consecutive meshes.
std::vector<ConvergenceRow> convergence_study(
    const SolverConfig& base, const std::vector<int>& orders,
    const std::vector<std::int64_t>& meshes,
    Runtime& runtime = Runtime::global());

}  // namespace streamforge::fr
