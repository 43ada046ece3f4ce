#include "streamforge/fr/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>

#include "fr_detail.hpp"
#include "streamforge/error.hpp"
#include "streamforge/expression.hpp"
#include "streamforge/fr/kernels.hpp"
#include "streamforge/fr/rk4.hpp"

namespace streamforge::fr {

namespace {

using detail::arg;

template <typename T>
IntrinsicKernel riemann_intrinsic() {
  return [](std::span<void* const> args) {
    const auto n = *arg<const std::int64_t>(args, 0);
    const T* prev = arg<const T>(args, 1);
    const T* cur = arg<const T>(args, 2);
    const T* next = arg<const T>(args, 3);
    const T a = static_cast<T>(*arg<const double>(args, 4));
    T* jmp = arg<T>(args, 5);
    for (std::int64_t e = 0; e < n; ++e) {
      const T* p = prev + 2 * e;
      const T* c = cur + 2 * e;
      const T* q = next + 2 * e;
      const T fl = (a > 0 ? a * p[1] : a * c[0]);
      const T fr = (a > 0 ? a * c[1] : a * q[0]);
      jmp[2 * e] = fl - a * c[0];
      jmp[2 * e + 1] = fr - a * c[1];
    }
  };
}

// Mirrors the generated statement tdivf = -rcpdjac*tdivf + S for whichever
// of t and ploc survived pruning.
template <typename T>
IntrinsicKernel negdivconf_intrinsic(const GeneratedSource& src,
                                     Expression source, bool has_source) {
  int t_at = -1, tdivf_at = -1, ploc_at = -1, rcp_at = -1;
  for (std::size_t i = 0; i < src.pruned_params.size(); ++i) {
    const auto& name = src.pruned_params[i].name;
    const int slot = static_cast<int>(i) + 1;
    if (name == "t") t_at = slot;
    if (name == "tdivf") tdivf_at = slot;
    if (name == "ploc") ploc_at = slot;
    if (name == "rcpdjac") rcp_at = slot;
  }
  return [=](std::span<void* const> args) {
    const auto n = *arg<const std::int64_t>(args, 0);
    T* tdivf = arg<T>(args, static_cast<std::size_t>(tdivf_at));
    const T* rcp = arg<const T>(args, static_cast<std::size_t>(rcp_at));
    const T* ploc =
        ploc_at > 0 ? arg<const T>(args, static_cast<std::size_t>(ploc_at))
                    : nullptr;
    const T t = t_at > 0 ? static_cast<T>(*arg<const double>(
                               args, static_cast<std::size_t>(t_at)))
                         : T(0);
    for (std::int64_t i = 0; i < n; ++i) {
      T s = T(0);
      if (has_source) {
        const double x = ploc ? static_cast<double>(ploc[i]) : 0.0;
        s = static_cast<T>(source.evaluate(x, static_cast<double>(t)));
      }
      tdivf[i] = -rcp[i] * tdivf[i] + s;
    }
  };
}

template <typename T>
void put(std::vector<std::byte>& out, std::size_t at,
         const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T v = static_cast<T>(values[i]);
    std::memcpy(out.data() + at + i * sizeof(T), &v, sizeof(T));
  }
}

void put_values(std::vector<std::byte>& out, std::size_t at,
                const std::vector<double>& values, Precision p) {
  if (p == Precision::f64) {
    put<double>(out, at, values);
  } else {
    put<float>(out, at, values);
  }
}

std::vector<double> get_values(const std::byte* in, std::size_t n,
                               Precision p) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (p == Precision::f64) {
      double v;
      std::memcpy(&v, in + i * 8, 8);
      out[i] = v;
    } else {
      float v;
      std::memcpy(&v, in + i * 4, 4);
      out[i] = v;
    }
  }
  return out;
}

template <typename V>
void put_raw(std::vector<std::byte>& out, std::size_t at, V v) {
  std::memcpy(out.data() + at, &v, sizeof v);
}

}  // namespace

struct Solver::Impl {
  Runtime* runtime;
  OffloadStream stream;
  SolverConfig cfg;
  FROperators ops;
  Expression source;
  Expression initial;
  bool has_source = false;

  std::int64_t n_e = 0, P = 0, N = 0;
  double h = 0.0;
  std::size_t esz = 8;
  std::vector<double> x;

  std::vector<std::byte> u_host;
  OffloadArray u;
  bool host_current = false;
  double t0 = 0.0;
  std::int64_t steps = 0;
  double dt = 0.0;

  detail::KernelSet kernels;
  std::size_t k_riemann = 0, k_negdivconf = 0;
  KernelHandle gemm;
  std::vector<KernelParam> negdivconf_params;
  std::uint64_t gemm_invokes = 0;

  // Staging copies of the uploaded families; kept alive for the transfers.
  std::vector<std::byte> op_host, const_host, geom_host;
  DevicePointer interp_t, d_t, corr_t;
  DevicePointer c_ne, c_P, c_two, c_N, c_a, c_one, c_zero;
  DevicePointer rcpdjac, ploc;
  DevicePointer faces, prev, next, jmp, work;
  std::vector<std::byte> scratch;

  std::unique_ptr<Rk4Integrator> integrator;

  Impl(Runtime& rt, OffloadStream s, SolverConfig c)
      : runtime(&rt),
        stream(std::move(s)),
        cfg(std::move(c)),
        ops(build_operators(cfg.p)),
        source(cfg.source_term_expr.empty()
                   ? Expression()
                   : Expression::parse(cfg.source_term_expr)),
        initial(Expression::parse(cfg.initial_condition)),
        kernels(rt, stream.device_id(), cfg.backend,
                CompileOptions{cfg.cache_dir, cfg.compiler_command}) {
    has_source = !source.is_zero();
    n_e = cfg.n_elements;
    P = cfg.p + 1;
    N = n_e * P;
    h = cfg.element_width();
    esz = cfg.precision == Precision::f64 ? 8 : 4;
    dt = cfg.dt;

    x.resize(static_cast<std::size_t>(N));
    for (std::int64_t e = 0; e < n_e; ++e) {
      for (std::int64_t j = 0; j < P; ++j) {
        x[static_cast<std::size_t>(e * P + j)] =
            cfg.x0 + static_cast<double>(e) * h +
            (1.0 + ops.xi[static_cast<std::size_t>(j)]) * h / 2;
      }
    }

    build_kernels();
    upload_families();

    u_host.assign(static_cast<std::size_t>(N) * esz, std::byte{0});
    u = stream.bind(
        HostArray{cfg.precision == Precision::f64 ? DType::f64 : DType::f32,
                  {n_e, P}, u_host.data(), {}},
        false);
    integrator = std::make_unique<Rk4Integrator>(
        rt, stream, cfg.precision, N, dt, cfg.backend,
        CompileOptions{cfg.cache_dir, cfg.compiler_command});
    stream.sync();
  }

  void build_kernels() {
    const bool f64 = cfg.precision == Precision::f64;
    k_riemann = kernels.add(riemann_kernel_spec(cfg.precision),
                            [f64](const GeneratedSource&) {
                              return f64 ? riemann_intrinsic<double>()
                                         : riemann_intrinsic<float>();
                            });
    std::vector<std::string> srcex;
    if (has_source) srcex.push_back(source.to_c({{"x", "ploc[0]"}}));
    const auto src = source;
    const bool with_source = has_source;
    k_negdivconf = kernels.add(
        negdivconf_kernel_spec(srcex, cfg.precision),
        [f64, src, with_source](const GeneratedSource& g) {
          return f64 ? negdivconf_intrinsic<double>(g, src, with_source)
                     : negdivconf_intrinsic<float>(g, src, with_source);
        });
    kernels.build();
    negdivconf_params = kernels.source(k_negdivconf).pruned_params;
    gemm = runtime->device(stream.device_id())
               .load_library(kBuiltinGemm)
               .get_kernel(f64 ? "mydgemm" : "mysgemm");
  }

  void upload_families() {
    const auto Pz = static_cast<std::size_t>(P);
    const auto Nz = static_cast<std::size_t>(N);

    // Operators, transposed for row-major U * M^T products.
    const std::size_t s_interp = Pz * 2 * esz, s_d = Pz * Pz * esz;
    auto op = detail::allocate_sliced(stream, {s_interp, s_d, s_interp});
    interp_t = op.parts[0];
    d_t = op.parts[1];
    corr_t = op.parts[2];
    op_host.assign(op.used, std::byte{0});
    put_values(op_host, interp_t.offset(), ops.m_interp.transposed().data,
               cfg.precision);
    put_values(op_host, d_t.offset(), ops.d.transposed().data, cfg.precision);
    put_values(op_host, corr_t.offset(), ops.c_corr.transposed().data,
               cfg.precision);
    upload(op, op_host);

    auto cs = detail::allocate_sliced(stream, {8, 8, 8, 8, 8, 8, 8});
    const_host.assign(cs.used, std::byte{0});
    c_ne = cs.parts[0];
    c_P = cs.parts[1];
    c_two = cs.parts[2];
    c_N = cs.parts[3];
    c_a = cs.parts[4];
    c_one = cs.parts[5];
    c_zero = cs.parts[6];
    put_raw<std::int64_t>(const_host, c_ne.offset(), n_e);
    put_raw<std::int64_t>(const_host, c_P.offset(), P);
    put_raw<std::int64_t>(const_host, c_two.offset(), 2);
    put_raw<std::int64_t>(const_host, c_N.offset(), N);
    put_raw<double>(const_host, c_a.offset(), cfg.a);
    put_raw<double>(const_host, c_one.offset(), 1.0);
    put_raw<double>(const_host, c_zero.offset(), 0.0);
    upload(cs, const_host);

    const bool need_ploc = uses("ploc");
    std::vector<std::size_t> geom_sizes = {Nz * esz};
    if (need_ploc) geom_sizes.push_back(Nz * esz);
    auto geom = detail::allocate_sliced(stream, geom_sizes);
    geom_host.assign(geom.used, std::byte{0});
    rcpdjac = geom.parts[0];
    put_values(geom_host, rcpdjac.offset(), std::vector<double>(Nz, 2.0 / h),
               cfg.precision);
    if (need_ploc) {
      ploc = geom.parts[1];
      put_values(geom_host, ploc.offset(), x, cfg.precision);
    }
    upload(geom, geom_host);

    const std::size_t s_face = static_cast<std::size_t>(n_e) * 2 * esz;
    auto wk = detail::allocate_sliced(
        stream, {s_face, s_face, s_face, s_face, Nz * esz});
    faces = wk.parts[0];
    prev = wk.parts[1];
    next = wk.parts[2];
    jmp = wk.parts[3];
    work = wk.parts[4];
  }

  // One transfer for the whole family.
  void upload(const detail::SlicedBlock& b, const std::vector<std::byte>& host) {
    stream.transfer_host2device(
        HostBufferRef{const_cast<std::byte*>(host.data()), host.size(), false},
        b.block, host.size());
  }

  bool uses(const std::string& name) const {
    for (const auto& p : negdivconf_params) {
      if (p.name == name) return true;
    }
    return false;
  }

  void invoke_gemm(const DevicePointer& A, const DevicePointer& B,
                   const DevicePointer& C, const DevicePointer& m,
                   const DevicePointer& n, const DevicePointer& k,
                   const DevicePointer& alpha, const DevicePointer& beta) {
    stream.invoke(gemm, {A, B, C, m, n, k, alpha, beta});
    ++gemm_invokes;
  }

  void enqueue_faces(const DevicePointer& uptr) {
    invoke_gemm(uptr, interp_t, faces, c_ne, c_two, c_P, c_one, c_zero);
  }

  void enqueue_rhs(const DevicePointer& uptr, double t,
                   const DevicePointer& dudt) {
    const std::size_t face = 2 * esz;
    const std::size_t rest = static_cast<std::size_t>(n_e - 1) * face;
    enqueue_faces(uptr);
    // Neighbour faces with periodic wrap.
    stream.transfer_device2device(faces, prev, rest, 0, face);
    stream.transfer_device2device(faces, prev, face, rest, 0);
    stream.transfer_device2device(faces, next, rest, face, 0);
    stream.transfer_device2device(faces, next, face, 0, rest);
    stream.invoke(kernels.handle(k_riemann),
                  {c_ne, prev, faces, next, c_a, jmp});

    invoke_gemm(uptr, d_t, dudt, c_ne, c_P, c_P, c_a, c_zero);
    invoke_gemm(jmp, corr_t, dudt, c_ne, c_P, c_two, c_one, c_one);

    std::vector<KernelArg> args = {c_N};
    for (const auto& p : negdivconf_params) {
      if (p.name == "t") {
        args.emplace_back(t);
      } else if (p.name == "tdivf") {
        args.emplace_back(dudt);
      } else if (p.name == "ploc") {
        args.emplace_back(ploc);
      } else {
        args.emplace_back(rcpdjac);
      }
    }
    stream.invoke(kernels.handle(k_negdivconf), std::move(args));
  }

  std::vector<double> download(const DevicePointer& src, std::size_t n) {
    scratch.assign(n * esz, std::byte{0});
    stream.transfer_device2host(
        src, HostBufferRef{scratch.data(), scratch.size(), true},
        scratch.size());
    stream.sync();
    return get_values(scratch.data(), n, cfg.precision);
  }
};

Solver::Solver(Runtime& runtime, OffloadStream stream, SolverConfig config) {
  config.validate();
  if (!stream) {
    throw Error(Errc::invalid_argument, "solver needs a stream");
  }
  impl_ = std::make_unique<Impl>(runtime, std::move(stream), std::move(config));
}

Solver::~Solver() = default;
Solver::Solver(Solver&&) noexcept = default;
Solver& Solver::operator=(Solver&&) noexcept = default;

const SolverConfig& Solver::config() const noexcept { return impl_->cfg; }
const FROperators& Solver::operators() const noexcept { return impl_->ops; }
const OffloadStream& Solver::stream() const noexcept { return impl_->stream; }
const OffloadArray& Solver::state() const noexcept { return impl_->u; }
const std::vector<double>& Solver::solution_points() const noexcept {
  return impl_->x;
}
double Solver::time() const noexcept {
  return impl_->t0 + static_cast<double>(impl_->steps) * impl_->dt;
}
std::int64_t Solver::step_count() const noexcept { return impl_->steps; }
std::uint64_t Solver::gemm_invokes() const noexcept {
  return impl_->gemm_invokes;
}

void Solver::set_initial_condition() {
  std::vector<double> u0(impl_->x.size());
  for (std::size_t i = 0; i < u0.size(); ++i) {
    u0[i] = impl_->initial.evaluate(impl_->x[i], 0.0);
  }
  set_solution(u0);
}

void Solver::set_solution(std::span<const double> values) {
  auto& m = *impl_;
  if (values.size() != static_cast<std::size_t>(m.N)) {
    throw Error(Errc::invalid_argument,
                "state needs " + std::to_string(m.N) + " values, got " +
                    std::to_string(values.size()));
  }
  m.stream.sync();
  put_values(m.u_host, 0, std::vector<double>(values.begin(), values.end()),
             m.cfg.precision);
  m.u.update_device();
  m.host_current = true;
  m.t0 = 0.0;
  m.steps = 0;
}

void Solver::advance(std::int64_t n) {
  auto& m = *impl_;
  for (std::int64_t i = 0; i < n; ++i) {
    m.integrator->step(m.u.device_ptr(), time(),
                       [&m](const DevicePointer& u, double t,
                            const DevicePointer& dudt) {
                         m.enqueue_rhs(u, t, dudt);
                       });
    ++m.steps;
    m.host_current = false;
  }
}

void Solver::check_finite() {
  if (auto bad = impl_->integrator->first_nonfinite_step()) {
    throw Error(Errc::numerical_divergence,
                "non-finite state after step " + std::to_string(*bad));
  }
}

std::vector<double> Solver::solution() {
  auto& m = *impl_;
  if (!m.host_current) {
    m.u.update_host();
    m.stream.sync();
    m.host_current = true;
  } else {
    m.stream.sync();
  }
  return get_values(m.u_host.data(), static_cast<std::size_t>(m.N),
                    m.cfg.precision);
}

std::vector<double> Solver::face_values() {
  auto& m = *impl_;
  m.enqueue_faces(m.u.device_ptr());
  return m.download(m.faces, static_cast<std::size_t>(m.n_e) * 2);
}

std::vector<double> Solver::rhs(double t) {
  auto& m = *impl_;
  m.enqueue_rhs(m.u.device_ptr(), t, m.work);
  return m.download(m.work, static_cast<std::size_t>(m.N));
}

void Solver::enqueue_rhs(const DevicePointer& u, double t,
                         const DevicePointer& dudt) {
  impl_->enqueue_rhs(u, t, dudt);
}

Diagnostic Solver::diagnostic() {
  auto& m = *impl_;
  if (!m.host_current) {
    m.u.update_host();
  }
  if (m.steps > 0) {
    check_finite();
  } else {
    m.stream.sync();
  }
  m.host_current = true;
  const auto u =
      get_values(m.u_host.data(), static_cast<std::size_t>(m.N), m.cfg.precision);

  Diagnostic d;
  d.step = m.steps;
  d.t = time();
  d.conserved_integral = conserved_integral(m.ops, m.h, u);
  if (m.has_source) {
    d.l2_error = d.relative_l2_error = std::numeric_limits<double>::quiet_NaN();
    return d;
  }
  const auto quad = gauss_legendre(m.cfg.p + 4);
  const auto E = lagrange_matrix(m.ops.xi, quad.points);
  const double L = m.cfg.x1 - m.cfg.x0;
  double err = 0.0, norm = 0.0;
  for (std::int64_t e = 0; e < m.n_e; ++e) {
    for (std::size_t q = 0; q < quad.points.size(); ++q) {
      double uh = 0.0;
      for (std::int64_t j = 0; j < m.P; ++j) {
        uh += E(q, static_cast<std::size_t>(j)) *
              u[static_cast<std::size_t>(e * m.P + j)];
      }
      const double xq = m.cfg.x0 + static_cast<double>(e) * m.h +
                        (1.0 + quad.points[q]) * m.h / 2;
      double s = (xq - m.cfg.a * d.t - m.cfg.x0) / L;
      s -= std::floor(s);
      const double ue = m.initial.evaluate(m.cfg.x0 + s * L, 0.0);
      const double w = quad.weights[q] * m.h / 2;
      err += w * (uh - ue) * (uh - ue);
      norm += w * ue * ue;
    }
  }
  d.l2_error = std::sqrt(err);
  d.relative_l2_error =
      norm > 0 ? std::sqrt(err / norm) : std::numeric_limits<double>::quiet_NaN();
  return d;
}

double conserved_integral(const FROperators& ops, double h,
                          std::span<const double> u) {
  const std::size_t P = ops.npts();
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    sum += ops.weights[i % P] * u[i];
  }
  return sum * h / 2;
}

SimulationResult run_simulation(const SolverConfig& config, Runtime& runtime,
                                int device_id) {
  config.validate();
  SimulationResult r;
  r.config = config;
  std::int64_t n = 0;
  if (config.t_end > 0) {
    n = static_cast<std::int64_t>(std::ceil(config.t_end / config.dt - 1e-9));
    if (n < 1) n = 1;
  }
  SolverConfig cfg = config;
  if (n > 0) cfg.dt = config.t_end / static_cast<double>(n);
  r.dt = n > 0 ? cfg.dt : config.dt;
  r.steps = n;

  Solver solver(runtime, runtime.create_stream(device_id), cfg);
  auto stream = solver.stream();
  solver.set_initial_condition();
  r.diagnostics.push_back(solver.diagnostic());

  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t i = 1; i <= n; ++i) {
    const auto before = stream.counters().host_array_transfers;
    solver.advance(1);
    r.requests.step_host_array_transfers +=
        stream.counters().host_array_transfers - before;
    if (cfg.diagnostic_interval > 0 && i % cfg.diagnostic_interval == 0 &&
        i < n) {
      r.diagnostics.push_back(solver.diagnostic());
    }
  }
  if (n > 0) {
    r.diagnostics.push_back(solver.diagnostic());
  }
  r.wall_seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();

  r.u = solver.solution();
  r.x = solver.solution_points();
  r.t = solver.time();
  r.requests.counters = stream.counters();
  r.requests.gemm_invokes = solver.gemm_invokes();
  for (auto k : r.requests.counters.by_kind) r.requests.total_requests += k;
  return r;
}

void write_diagnostics_csv(std::ostream& out,
                           const std::vector<Diagnostic>& diagnostics) {
  out << "step,t,l2_error,conserved_integral\n";
  char buf[128];
  for (const auto& d : diagnostics) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(d.step), d.t, d.l2_error,
                  d.conserved_integral);
    out << buf;
  }
}

void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<Diagnostic>& diagnostics) {
  std::ofstream out(path);
  if (!out) {
    throw Error(Errc::io_error, "cannot write '" + path.string() + "'");
  }
  write_diagnostics_csv(out, diagnostics);
  out.flush();
  if (!out) {
    throw Error(Errc::io_error, "write to '" + path.string() + "' failed");
  }
}

double flops_per_step(int p, std::int64_t n_elements) {
  const double ne = static_cast<double>(n_elements);
  const double P = p + 1;
  const double N = ne * P;
  const double gemm = 2 * ne * 2 * P + 2 * ne * P * P + (2 * ne * P * 2 + ne * P);
  const double pointwise = 6 * ne + 2 * N;
  return 4 * (gemm + pointwise) + 3 * 2 * N + 8 * N;
}

std::vector<ConvergenceRow> convergence_study(
    const SolverConfig& base, const std::vector<int>& orders,
    const std::vector<std::int64_t>& meshes, Runtime& runtime) {
  std::vector<ConvergenceRow> rows;
  for (int p : orders) {
    double prev_err = 0.0;
    std::int64_t prev_n = 0;
    for (std::int64_t ne : meshes) {
      SolverConfig c = base;
      c.p = p;
      c.n_elements = ne;
      c.diagnostic_interval = 0;
      const auto r = run_simulation(c, runtime);
      ConvergenceRow row;
      row.p = p;
      row.n_elements = ne;
      row.l2_error = r.diagnostics.back().l2_error;
      row.order = prev_n == 0
                      ? std::numeric_limits<double>::quiet_NaN()
                      : std::log(prev_err / row.l2_error) /
                            std::log(static_cast<double>(ne) /
                                     static_cast<double>(prev_n));
      rows.push_back(row);
      prev_err = row.l2_error;
      prev_n = ne;
    }
  }
  return rows;
}

}  // namespace streamforge::fr
