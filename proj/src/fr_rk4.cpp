#include "streamforge/fr/rk4.hpp"

#include <array>
#include <cmath>
#include <cstring>

#include "fr_detail.hpp"
#include "streamforge/error.hpp"
#include "streamforge/fr/kernels.hpp"

namespace streamforge::fr {

namespace {

using detail::arg;

template <typename T>
IntrinsicKernel axpy_intrinsic() {
  return [](std::span<void* const> a) {
    const auto n = *arg<const std::int64_t>(a, 0);
    T* out = arg<T>(a, 1);
    const T* u = arg<const T>(a, 2);
    const T* k = arg<const T>(a, 3);
    const T c = static_cast<T>(*arg<const double>(a, 4));
    for (std::int64_t i = 0; i < n; ++i) {
      out[i] = u[i] + c * k[i];
    }
  };
}

template <typename T>
IntrinsicKernel update_intrinsic() {
  return [](std::span<void* const> a) {
    const auto n = *arg<const std::int64_t>(a, 0);
    T* u = arg<T>(a, 1);
    const T* k1 = arg<const T>(a, 2);
    const T* k2 = arg<const T>(a, 3);
    const T* k3 = arg<const T>(a, 4);
    const T* k4 = arg<const T>(a, 5);
    const T dt = static_cast<T>(*arg<const double>(a, 6));
    for (std::int64_t i = 0; i < n; ++i) {
      u[i] = u[i] + dt / T(6.0) * (k1[i] + T(2.0) * k2[i] + T(2.0) * k3[i] +
                                   k4[i]);
    }
  };
}

// state[0] counts checks, state[1] keeps the first failing count (or -1).
template <typename T>
IntrinsicKernel check_intrinsic() {
  return [](std::span<void* const> a) {
    const T* u = arg<const T>(a, 0);
    const auto n = *arg<const std::int64_t>(a, 1);
    auto* state = arg<std::int64_t>(a, 2);
    ++state[0];
    if (state[1] >= 0) return;
    for (std::int64_t i = 0; i < n; ++i) {
      if (!std::isfinite(u[i])) {
        state[1] = state[0];
        return;
      }
    }
  };
}

}  // namespace

struct Rk4Integrator::Impl {
  OffloadStream stream;
  Precision precision;
  std::int64_t npts;
  double dt;
  std::int64_t steps = 0;
  detail::KernelSet kernels;
  std::size_t k_axpy = 0, k_update = 0, k_check = 0;

  // npts, dt/2, dt, check state
  std::array<std::byte, 40> constants_host{};
  std::array<std::int64_t, 2> state_host{};
  DevicePointer c_npts, c_half, c_dt, c_state;
  DevicePointer tmp, k1, k2, k3, k4;

  Impl(Runtime& runtime, OffloadStream s, Precision p, std::int64_t n,
       double step, SolverBackend backend, CompileOptions compile)
      : stream(std::move(s)),
        precision(p),
        npts(n),
        dt(step),
        kernels(runtime, stream.device_id(), backend, std::move(compile)) {
    const bool f64 = precision == Precision::f64;
    k_axpy = kernels.add(rk_axpy_kernel_spec(precision), [f64](const auto&) {
      return f64 ? axpy_intrinsic<double>() : axpy_intrinsic<float>();
    });
    k_update =
        kernels.add(rk4_update_kernel_spec(precision), [f64](const auto&) {
          return f64 ? update_intrinsic<double>() : update_intrinsic<float>();
        });
    k_check = kernels.add_intrinsic(
        "check_finite",
        f64 ? check_intrinsic<double>() : check_intrinsic<float>());
    kernels.build();

    const std::size_t bytes =
        static_cast<std::size_t>(npts) * (f64 ? sizeof(double) : sizeof(float));
    auto stages = detail::allocate_sliced(stream, {bytes, bytes, bytes, bytes,
                                                   bytes}).parts;
    tmp = stages[0];
    k1 = stages[1];
    k2 = stages[2];
    k3 = stages[3];
    k4 = stages[4];

    auto consts = detail::allocate_sliced(stream, {40}).parts;
    const double half = dt / 2;
    const std::int64_t init_state[2] = {0, -1};
    std::memcpy(constants_host.data(), &npts, 8);
    std::memcpy(constants_host.data() + 8, &half, 8);
    std::memcpy(constants_host.data() + 16, &dt, 8);
    std::memcpy(constants_host.data() + 24, init_state, 16);
    stream.transfer_host2device(
        HostBufferRef{constants_host.data(), constants_host.size(), false},
        consts[0], constants_host.size());
    c_npts = consts[0].slice(0, 8);
    c_half = consts[0].slice(8, 8);
    c_dt = consts[0].slice(16, 8);
    c_state = consts[0].slice(24, 16);
    stream.sync();
  }
};

Rk4Integrator::Rk4Integrator(Runtime& runtime, OffloadStream stream,
                             Precision precision, std::int64_t npts, double dt,
                             SolverBackend backend, CompileOptions compile) {
  if (npts < 1) {
    throw Error(Errc::invalid_argument, "integrator needs at least one point");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error(Errc::invalid_argument, "time step must be positive");
  }
  impl_ = std::make_unique<Impl>(runtime, std::move(stream), precision, npts,
                                 dt, backend, std::move(compile));
}

Rk4Integrator::~Rk4Integrator() = default;
Rk4Integrator::Rk4Integrator(Rk4Integrator&&) noexcept = default;
Rk4Integrator& Rk4Integrator::operator=(Rk4Integrator&&) noexcept = default;

double Rk4Integrator::dt() const noexcept { return impl_->dt; }
std::int64_t Rk4Integrator::steps() const noexcept { return impl_->steps; }

void Rk4Integrator::step(const DevicePointer& u, double t,
                         const RhsFunction& rhs) {
  auto& m = *impl_;
  auto& s = m.stream;
  const auto& axpy = m.kernels.handle(m.k_axpy);
  const double dt = m.dt;

  rhs(u, t, m.k1);
  s.invoke(axpy, {m.c_npts, m.tmp, u, m.k1, m.c_half});
  rhs(m.tmp, t + dt / 2, m.k2);
  s.invoke(axpy, {m.c_npts, m.tmp, u, m.k2, m.c_half});
  rhs(m.tmp, t + dt / 2, m.k3);
  s.invoke(axpy, {m.c_npts, m.tmp, u, m.k3, m.c_dt});
  rhs(m.tmp, t + dt, m.k4);
  s.invoke(m.kernels.handle(m.k_update),
           {m.c_npts, u, m.k1, m.k2, m.k3, m.k4, m.c_dt});
  s.invoke(m.kernels.handle(m.k_check), {u, m.c_npts, m.c_state});
  ++m.steps;
}

std::optional<std::int64_t> Rk4Integrator::first_nonfinite_step() {
  auto& m = *impl_;
  m.stream.transfer_device2host(
      m.c_state,
      HostBufferRef{reinterpret_cast<std::byte*>(m.state_host.data()), 16,
                    true},
      16);
  m.stream.sync();
  if (m.state_host[1] >= 0) return m.state_host[1];
  return std::nullopt;
}

}  // namespace streamforge::fr
