// Acceptance suite: one PASS/FAIL line per criterion. Exit status is zero
// only when every selected criterion passes.
//
//   acceptance            run criteria 1..8
//   acceptance 3 6        run a subset
//   acceptance --codegen-digest   print the digest used by criterion 5

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "streamforge/bench.hpp"
#include "streamforge/codegen.hpp"
#include "streamforge/fr/kernels.hpp"
#include "streamforge/fr/solver.hpp"
#include "streamforge/kernel.hpp"
#include "streamforge/runtime.hpp"
#include "support/fifo_oracle.hpp"
#include "support/gemm_oracle.hpp"

namespace {

using namespace streamforge;
namespace ts = streamforge::testing_support;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Runtime make_runtime(std::size_t arena) {
  RuntimeOptions opts;
  opts.device.arena_bytes = arena;
  return Runtime(opts);
}

// 1. Stream FIFO oracle.
Outcome fifo_oracle() {
  constexpr int kSequences = 10000;
  auto t0 = Clock::now();
  auto rt = make_runtime(std::size_t{1} << 24);
  ts::register_oracle_kernels(rt);
  auto lib = rt.device(0).load_library(ts::kOracleLibrary);
  std::mt19937_64 rng(1);
  ts::StreamCase cases[2] = {{rt.create_stream(0)}, {rt.create_stream(0)}};
  for (int i = 0; i < kSequences / 2; ++i) {
    // Each case drives two streams, so every iteration checks two sequences.
    auto msg = ts::run_fifo_case(rt, lib, rng, 50, cases);
    if (!msg.empty()) {
      return {false, "sequence pair " + std::to_string(i) + ": " + msg};
    }
  }
  const double secs = seconds_since(t0);
  return {secs < 60.0, std::to_string(kSequences) + " sequences in " +
                           fmt("%.2f s", secs) + " (limit 60 s)"};
}

// 2. Transfer round trip.
Outcome round_trip() {
  constexpr std::size_t kMaxOffset = 4096;
  constexpr int kTriples = 100;
  auto t0 = Clock::now();
  auto rt = make_runtime(std::size_t{256} << 20);
  auto s = rt.get_default_stream(0);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> off(0, kMaxOffset);
  const std::size_t max_size = std::size_t{64} << 20;
  std::vector<std::uint8_t> src(max_size + kMaxOffset), dst(max_size + kMaxOffset);
  for (auto& b : src) b = static_cast<std::uint8_t>(rng());
  int sizes = 0;
  for (std::size_t n = 1; n <= max_size; n *= 2, ++sizes) {
    auto dev = s.allocate_device_memory(n + kMaxOffset);
    for (int t = 0; t < kTriples; ++t) {
      const std::size_t oh = off(rng), od = off(rng), oh2 = off(rng);
      // Poison the destination so a stale match cannot pass.
      for (std::size_t i = 0; i < n; ++i) dst[oh2 + i] = static_cast<std::uint8_t>(~src[oh + i]);
      s.transfer_host2device(HostBufferRef::from(std::span<const std::uint8_t>(src)),
                             dev, n, oh, od);
      s.transfer_device2host(dev, HostBufferRef::from(std::span<std::uint8_t>(dst)), n,
                             od, oh2);
      s.sync();
      if (std::memcmp(src.data() + oh, dst.data() + oh2, n) != 0) {
        return {false, "mismatch at size " + std::to_string(n) + " offsets (" +
                           std::to_string(oh) + "," + std::to_string(od) + "," +
                           std::to_string(oh2) + ")"};
      }
    }
    s.deallocate_device_memory(dev);
  }
  s.sync();
  const double secs = seconds_since(t0);
  return {secs < 30.0, std::to_string(sizes) + " sizes x " + std::to_string(kTriples) +
                           " offset triples in " + fmt("%.2f s", secs) +
                           " (limit 30 s)"};
}

// 3. Marshalling law.
Outcome marshalling_law() {
  auto rt = make_runtime(std::size_t{1} << 24);
  IntrinsicKernelMap k;
  k["noop"] = [](std::span<void* const>) {};
  rt.register_intrinsic_library("acceptance-probe", std::move(k));
  auto noop = rt.device(0).load_library("acceptance-probe").get_kernel("noop");
  auto s = rt.get_default_stream(0);
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> host(4, std::vector<double>(32, 2.0));
  std::vector<OffloadArray> dev;
  for (auto& h : host) dev.push_back(s.bind(HostArray::from(std::span(h))));
  s.sync();
  int combos = 0;
  for (int h = 0; h <= 4; ++h) {
    for (int sc = 0; sc <= 4; ++sc) {
      for (int o = 0; o <= 4; ++o, ++combos) {
        std::vector<KernelArg> args;
        for (int i = 0; i < h; ++i) {
          args.emplace_back(HostArray::from(std::span(host[static_cast<std::size_t>(i)])));
        }
        for (int i = 0; i < sc; ++i) {
          switch (rng() % 3) {
            case 0: args.emplace_back(static_cast<std::int64_t>(i)); break;
            case 1: args.emplace_back(0.25 * i); break;
            default: args.emplace_back(std::complex<double>(i, -i));
          }
        }
        for (int i = 0; i < o; ++i) args.emplace_back(dev[static_cast<std::size_t>(i)]);
        std::shuffle(args.begin(), args.end(), rng);
        s.sync();
        s.clear_request_log();
        s.invoke(noop, std::move(args));
        s.sync();
        std::uint64_t automatic = 0;
        for (const auto& r : s.request_log()) {
          if (r.role == RequestRole::array_copy_in || r.role == RequestRole::array_copy_out ||
              r.role == RequestRole::scalar_copy_in) {
            ++automatic;
          }
        }
        const auto want = static_cast<std::uint64_t>(2 * h + sc);
        if (automatic != want) {
          return {false, "(h,s,o)=(" + std::to_string(h) + "," + std::to_string(sc) +
                             "," + std::to_string(o) + "): " + std::to_string(automatic) +
                             " automatic transfers, expected " + std::to_string(want)};
        }
      }
    }
  }
  return {true, std::to_string(combos) + " (h,s,o) combinations, exact 2h+s"};
}

// 4. GEMM correctness.
template <typename T>
double gemm_error(OffloadStream& s, const KernelHandle& k, std::mt19937_64& rng,
                  std::int64_t m, std::int64_t n, std::int64_t kk) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> a(static_cast<std::size_t>(m * kk)), b(static_cast<std::size_t>(kk * n)),
      c(static_cast<std::size_t>(m * n));
  for (auto& v : a) v = static_cast<T>(u(rng));
  for (auto& v : b) v = static_cast<T>(u(rng));
  for (auto& v : c) v = static_cast<T>(u(rng));
  const double alpha = u(rng);
  const double beta = (rng() % 2) ? u(rng) : 0.0;
  auto want = ts::gemm_reference(a, b, c, m, n, kk, alpha, beta);
  s.invoke(k, {HostArray::from(std::span(a)), HostArray::from(std::span(b)),
               HostArray::from(std::span(c)), m, n, kk, alpha, beta});
  s.sync();
  return ts::relative_frobenius(c, want);
}

Outcome gemm_correctness() {
  constexpr int kShapes = 200;
  auto t0 = Clock::now();
  auto rt = make_runtime(std::size_t{64} << 20);
  auto s = rt.get_default_stream(0);
  auto lib = rt.device(0).load_library(kBuiltinGemm);
  auto dgemm = lib.get_kernel("mydgemm");
  auto sgemm = lib.get_kernel("mysgemm");
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::int64_t> dim(1, 512);
  double worst64 = 0, worst32 = 0;
  for (int i = 0; i < kShapes; ++i) {
    const auto m = dim(rng), n = dim(rng), kk = dim(rng);
    const double e64 = gemm_error<double>(s, dgemm, rng, m, n, kk);
    const double e32 = gemm_error<float>(s, sgemm, rng, m, n, kk);
    worst64 = std::max(worst64, e64);
    worst32 = std::max(worst32, e32);
    if (!(e64 <= 1e-13) || !(e32 <= 1e-5)) {
      return {false, "shape " + std::to_string(m) + "x" + std::to_string(n) + "x" +
                         std::to_string(kk) + ": f64 " + fmt("%.3g", e64) + ", f32 " +
                         fmt("%.3g", e32)};
    }
  }
  const double secs = seconds_since(t0);
  return {secs < 120.0, std::to_string(kShapes) + " shapes, worst f64 " +
                            fmt("%.3g", worst64) + " (<= 1e-13), worst f32 " +
                            fmt("%.3g", worst32) + " (<= 1e-5), " +
                            fmt("%.1f s", secs) + " (limit 120 s)"};
}

// 5. Codegen.
std::vector<std::string> param_names(const GeneratedSource& g) {
  std::vector<std::string> out;
  for (const auto& p : g.pruned_params) out.push_back(p.name);
  return out;
}

std::string codegen_digest() {
  std::string all;
  for (auto prec : {Precision::f64, Precision::f32}) {
    for (const auto& src : std::vector<std::vector<std::string>>{
             {}, {"sin(t)"}, {"ploc[0]*t + 0.5"}}) {
      all += generate_pointwise_source(fr::negdivconf_kernel_spec(src, prec)).text;
    }
    all += generate_pointwise_source(fr::negdivconf_kernel_spec({}, prec, 3, 5)).text;
    all += generate_pointwise_source(fr::riemann_kernel_spec(prec)).text;
    all += generate_pointwise_source(fr::rk_axpy_kernel_spec(prec)).text;
    all += generate_pointwise_source(fr::rk4_update_kernel_spec(prec)).text;
  }
  return sha256_hex(all);
}

std::string child_digest(const char* self) {
  const std::string cmd = std::string("\"") + self + "\" --codegen-digest";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return {};
  char buf[128] = {};
  std::string out;
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out;
}

std::string random_c_text(std::mt19937_64& rng) {
  static const char* tokens[] = {"1.0", ".5", "2.", "1e-3", "1.5E+2", "0x1F", "42",
                                 "x1", "u", "*", "+", " ", "(", ")", ";", "f",
                                 "3.25f", "e", "1.0e", "7", "."};
  std::string s;
  const auto len = 1 + rng() % 40;
  for (std::size_t i = 0; i < len; ++i) s += tokens[rng() % std::size(tokens)];
  return s;
}

Outcome codegen(const char* self) {
  using V = std::vector<std::string>;
  for (auto prec : {Precision::f64, Precision::f32}) {
    auto none = generate_pointwise_source(fr::negdivconf_kernel_spec({}, prec));
    if (param_names(none) != V{"tdivf", "rcpdjac"}) {
      return {false, "no source term: t and ploc not both pruned"};
    }
    auto with_t = generate_pointwise_source(fr::negdivconf_kernel_spec({"sin(t)"}, prec));
    if (param_names(with_t) != V{"t", "tdivf", "rcpdjac"}) {
      return {false, "source term in t: t not retained alone"};
    }
    auto with_x = generate_pointwise_source(fr::negdivconf_kernel_spec({"ploc[0]"}, prec));
    if (param_names(with_x) != V{"tdivf", "ploc", "rcpdjac"}) {
      return {false, "source term in x: ploc not retained alone"};
    }
  }
  std::mt19937_64 rng(5);
  int suffix_checks = 0;
  std::vector<std::string> samples;
  for (int i = 0; i < 2000; ++i) samples.push_back(random_c_text(rng));
  for (auto prec : {Precision::f64, Precision::f32}) {
    samples.push_back(generate_pointwise_source(fr::rk4_update_kernel_spec(prec)).text);
    samples.push_back(generate_pointwise_source(fr::riemann_kernel_spec(prec)).text);
  }
  for (const auto& text : samples) {
    for (auto prec : {Precision::f64, Precision::f32}) {
      const auto once = suffix_float_constants(text, prec);
      if (suffix_float_constants(once, prec) != once) {
        return {false, "suffixing not idempotent on: " + text};
      }
      if (prec == Precision::f64 && once != text) {
        return {false, "f64 suffixing changed: " + text};
      }
      ++suffix_checks;
    }
  }
  const auto here = codegen_digest();
  if (codegen_digest() != here) return {false, "generation differs within one run"};
  const auto other = child_digest(self);
  if (other != here) {
    return {false, "generation differs across runs: " + here + " vs '" + other + "'"};
  }
  return {true, "pruning t/ploc as expected, " + std::to_string(suffix_checks) +
                    " idempotent suffix checks, digest " + here.substr(0, 16) +
                    " identical across processes"};
}

// 6. FR solver.
Outcome fr_solver(Runtime& rt) {
  auto t0 = Clock::now();
  std::mt19937_64 rng(6);
  std::ostringstream detail;

  // (a) free-stream
  double worst_change = 0;
  for (int trial = 0; trial < 24; ++trial) {
    fr::SolverConfig cfg;
    cfg.p = std::uniform_int_distribution<int>(1, 8)(rng);
    cfg.n_elements = std::uniform_int_distribution<int>(2, 64)(rng);
    cfg.a = std::uniform_real_distribution<double>(-3, 3)(rng);
    const double limit = 0.1 * cfg.element_width() /
                         ((cfg.p + 1) * (cfg.p + 1) * std::max(1.0, std::fabs(cfg.a)));
    cfg.dt = limit * std::pow(10.0, std::uniform_real_distribution<double>(-4, 0)(rng));
    const double c = std::uniform_real_distribution<double>(-10, 10)(rng);
    const double scale = std::max(1.0, std::fabs(c));
    fr::Solver s(rt, rt.create_stream(0), cfg);
    std::vector<double> u(static_cast<std::size_t>(cfg.npts()), c);
    s.set_solution(u);
    for (int step = 0; step < 25; ++step) {
      s.advance(1);
      auto next = s.solution();
      double change = 0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        change = std::max(change, std::fabs(next[i] - u[i]));
      }
      worst_change = std::max(worst_change, change / scale);
      if (!(change <= 1e-13 * scale)) {
        return {false, "(a) free-stream: p=" + std::to_string(cfg.p) + " step " +
                           std::to_string(step) + " change " + fmt("%.3g", change)};
      }
      u = std::move(next);
    }
  }
  detail << "(a) worst per-step change " << fmt("%.2g", worst_change) << "; ";

  // (b) conservation
  double worst_drift = 0;
  for (int trial = 0; trial < 16; ++trial) {
    fr::SolverConfig cfg;
    cfg.p = std::uniform_int_distribution<int>(1, 6)(rng);
    cfg.n_elements = std::uniform_int_distribution<int>(2, 64)(rng);
    cfg.a = std::uniform_real_distribution<double>(-2, 2)(rng);
    const double h = cfg.element_width();
    cfg.dt = 0.05 * h / ((cfg.p + 1) * (cfg.p + 1) * std::max(1.0, std::fabs(cfg.a)));
    cfg.initial_condition = "1 + 0.5*sin(2*pi*x) + 0.25*cos(6*pi*x)";
    fr::Solver s(rt, rt.create_stream(0), cfg);
    s.set_initial_condition();
    double before = fr::conserved_integral(s.operators(), h, s.solution());
    for (int step = 0; step < 25; ++step) {
      s.advance(1);
      const double after = fr::conserved_integral(s.operators(), h, s.solution());
      const double drift = std::fabs(after - before) / std::fabs(before);
      worst_drift = std::max(worst_drift, drift);
      if (!(drift <= 1e-12)) {
        return {false, "(b) conservation: p=" + std::to_string(cfg.p) + " drift " +
                           fmt("%.3g", drift)};
      }
      before = after;
    }
  }
  detail << "(b) worst relative drift " << fmt("%.2g", worst_drift) << "; ";

  // (c) convergence
  fr::SolverConfig base;
  base.dt = 2.5e-4;
  base.t_end = 1.0;
  base.initial_condition = "sin(2*pi*x)";
  auto rows = fr::convergence_study(base, {1, 2, 3, 4}, {8, 16, 32, 64}, rt);
  detail << "(c) orders";
  bool ok = true;
  for (const auto& r : rows) {
    if (std::isnan(r.order)) continue;
    detail << " p" << r.p << "/" << r.n_elements << "=" << fmt("%.2f", r.order);
    if (!(r.order >= r.p + 0.5)) ok = false;
  }
  const double secs = seconds_since(t0);
  detail << "; " << fmt("%.1f s", secs) << " (limit 180 s)";
  return {ok && secs < 180.0, detail.str()};
}

// 7. Offload-everything.
Outcome offload_everything(Runtime& rt) {
  std::vector<std::uint64_t> totals;
  std::ostringstream detail;
  for (double t_end : {0.05, 0.2}) {
    fr::SolverConfig cfg;
    cfg.p = 3;
    cfg.n_elements = 32;
    cfg.dt = 1e-3;
    cfg.t_end = t_end;
    auto r = fr::run_simulation(cfg, rt);
    if (r.requests.step_host_array_transfers != 0) {
      return {false, std::to_string(r.requests.step_host_array_transfers) +
                         " host array transfers during " + std::to_string(r.steps) +
                         " steps"};
    }
    totals.push_back(r.requests.counters.host_array_transfers);
    detail << r.steps << " steps: " << r.requests.counters.host_array_transfers
           << " host array transfers in total; ";
  }
  fr::SolverConfig src;
  src.p = 2;
  src.n_elements = 8;
  src.source_term_expr = "cos(t)*sin(2*pi*x)";
  src.t_end = 0.05;
  auto r = fr::run_simulation(src, rt);
  if (r.requests.step_host_array_transfers != 0) {
    return {false, "time-dependent source: per-step host array transfers"};
  }
  detail << "time-dependent source: 0 per step";
  return {totals[0] == totals[1], detail.str()};
}

// 8. Timing-model bandwidth shape.
Outcome timing_model() {
  const TimingModel model{50, 6e9};
  RuntimeOptions opts;
  opts.device.arena_bytes = std::size_t{256} << 20;
  opts.device.timing = model;
  Runtime rt(opts);
  TransferBenchOptions o;
  o.min_bytes = 1;
  o.max_bytes = std::size_t{64} << 20;
  o.reps = 3;
  auto records = bench_transfer(rt, o);
  double worst_dev = 0, at_max = 0;
  for (const char* name : {"copyin", "copyout", "bind"}) {
    double prev = -1;
    for (const auto& r : records) {
      if (r.benchmark != name) continue;
      if (!(r.metric >= prev)) {
        return {false, std::string(name) + " not monotone at " + std::to_string(r.size)};
      }
      prev = r.metric;
      if (std::string(name) == "bind") continue;
      const double expect = model.effective_bandwidth(r.size) * 1e-9;
      const double dev = std::fabs(r.metric - expect) / expect;
      worst_dev = std::max(worst_dev, dev);
      if (!(dev <= 0.05)) {
        return {false, std::string(name) + " at " + std::to_string(r.size) + " B off by " +
                           fmt("%.3g", dev * 100) + "%"};
      }
      if (r.size == o.max_bytes && std::string(name) == "copyin") at_max = r.metric;
    }
  }
  const double frac = at_max / (model.bandwidth_bytes_per_s * 1e-9);
  return {frac >= 0.9, "monotone 1 B..64 MiB, copyin at 64 MiB " + fmt("%.3f GB/s", at_max) +
                           " (" + fmt("%.1f", frac * 100) +
                           "% of 6 GB/s), worst closed-form deviation " +
                           fmt("%.2g", worst_dev * 100) + "%"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc == 2 && std::strcmp(argv[1], "--codegen-digest") == 0) {
    std::cout << codegen_digest() << "\n";
    return 0;
  }
  RuntimeOptions opts;
  opts.device.arena_bytes = std::size_t{1} << 26;
  Runtime solver_rt(opts);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "stream FIFO oracle", fifo_oracle},
      {2, "transfer round trip", round_trip},
      {3, "marshalling law", marshalling_law},
      {4, "GEMM correctness", gemm_correctness},
      {5, "codegen", [&] { return codegen(argv[0]); }},
      {6, "FR solver", [&] { return fr_solver(solver_rt); }},
      {7, "offload-everything", [&] { return offload_everything(solver_rt); }},
      {8, "timing-model bandwidth", timing_model},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.id) == selected.end()) {
      continue;
    }
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    if (!out.pass) ++failures;
    std::cout << "criterion " << c.id << " " << (out.pass ? "PASS" : "FAIL") << " ["
              << c.name << "] " << out.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
