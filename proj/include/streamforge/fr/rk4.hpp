#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>

#include "streamforge/codegen.hpp"
#include "streamforge/fr/config.hpp"
#include "streamforge/memory.hpp"
#include "streamforge/runtime.hpp"

namespace streamforge::fr {

/// Device-side right-hand side: writes du/dt at time t of state `u` into
/// `dudt`. Must only enqueue work on the integrator's stream.
using RhsFunction = std::function<void(const DevicePointer& u, double t,
                                       const DevicePointer& dudt)>;

/// Classical four-stage Runge-Kutta over a device vector of `npts` values.
/// Stage storage and step constants live on the device, so a step enqueues
/// no host array transfers. After every step a device-side check records the
/// first step that produced a non-finite value.
class Rk4Integrator {
 public:
  Rk4Integrator(Runtime& runtime, OffloadStream stream, Precision precision,
                std::int64_t npts, double dt,
                SolverBackend backend = SolverBackend::intrinsic,
                CompileOptions compile = {});
  ~Rk4Integrator();
  Rk4Integrator(Rk4Integrator&&) noexcept;
  Rk4Integrator& operator=(Rk4Integrator&&) noexcept;

  /// Enqueues one step u(t) -> u(t + dt).
  void step(const DevicePointer& u, double t, const RhsFunction& rhs);

  double dt() const noexcept;
  std::int64_t steps() const noexcept;

  /// Syncs the stream and returns the 1-based index of the first step whose
  /// result contained a non-finite value.
  std::optional<std::int64_t> first_nonfinite_step();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace streamforge::fr
