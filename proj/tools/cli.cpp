#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "streamforge/bench.hpp"
#include "streamforge/error.hpp"
#include "streamforge/fr/solver.hpp"
#include "streamforge/runtime.hpp"

namespace streamforge::cli {

namespace {

struct TimingFlags {
  double latency_us = -1;
  double bandwidth_gbs = -1;
  std::string device_config;
};

void add_timing_flags(CLI::App* cmd, TimingFlags& t) {
  cmd->add_option("--latency-us", t.latency_us,
                  "timing model: per-request latency in microseconds");
  cmd->add_option("--bandwidth-gbs", t.bandwidth_gbs,
                  "timing model: transfer bandwidth in GB/s (installs the model)");
  cmd->add_option("--device-config", t.device_config,
                  "key-value device config file")
      ->check(CLI::ExistingFile);
}

void apply_timing(Runtime& rt, int device, const TimingFlags& t) {
  DeviceConfig cfg = rt.device(device).config();
  if (!t.device_config.empty()) {
    cfg = device_config_from(read_key_value_file(t.device_config), cfg);
  }
  if (t.bandwidth_gbs > 0) {
    cfg.timing = TimingModel{t.latency_us > 0 ? t.latency_us : 0.0,
                             t.bandwidth_gbs * 1e9};
  } else if (t.latency_us >= 0) {
    throw Error(Errc::invalid_argument, "--latency-us needs --bandwidth-gbs");
  }
  rt.configure_device(device, cfg.arena_bytes, cfg.timing, cfg.realistic_timing);
}

// Fails before any work is done when the output cannot be created.
void check_writable(const std::string& path) {
  if (path.empty()) return;
  std::ofstream probe(path, std::ios::app);
  if (!probe) throw Error(Errc::io_error, "cannot write '" + path + "'");
}

void write_convergence_csv(const std::string& path,
                           const std::vector<fr::ConvergenceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write '" + path + "'");
  out << "p,n_elements,l2_error,order\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%lld,%.17g,%.6g\n", r.p,
                  static_cast<long long>(r.n_elements), r.l2_error, r.order);
    out << buf;
  }
  out.flush();
  if (!out) throw Error(Errc::io_error, "write to '" + path + "' failed");
}

void print_solve_summary(std::ostream& out, const fr::SimulationResult& r) {
  const double fps = fr::flops_per_step(r.config.p, r.config.n_elements);
  const double sps = r.steps > 0 && r.wall_seconds > 0
                         ? static_cast<double>(r.steps) / r.wall_seconds
                         : 0.0;
  char buf[256];
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%-36s %.6g\n", key, v);
    out << buf;
  };
  out << "p = " << r.config.p << ", n_elements = " << r.config.n_elements
      << ", precision = " << to_string(r.config.precision)
      << ", backend = " << to_string(r.config.backend) << "\n";
  line("steps", static_cast<double>(r.steps));
  line("dt", r.dt);
  line("t_final", r.t);
  line("wall_seconds", r.wall_seconds);
  line("steps_per_second", sps);
  line("model_flops_per_step", fps);
  line("estimated_gflops", sps * fps * 1e-9);
  line("reference_3d_case_flops_per_step", kReferenceCaseFlopsPerStep);
  const auto& first = r.diagnostics.front();
  const auto& last = r.diagnostics.back();
  line("l2_error", last.l2_error);
  line("relative_l2_error", last.relative_l2_error);
  line("conserved_integral_change",
       last.conserved_integral - first.conserved_integral);
  line("host_array_transfers_during_steps",
       static_cast<double>(r.requests.step_host_array_transfers));
  line("gemm_invokes", static_cast<double>(r.requests.gemm_invokes));
  line("total_requests", static_cast<double>(r.requests.total_requests));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"streamforge: offload runtime benchmarks and solver driver"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "runtime benchmarks");
  bench->require_subcommand(1);
  auto* solve = app.add_subcommand("solve", "advection solver");
  solve->require_subcommand(1);

  TransferBenchOptions topt;
  TimingFlags ttiming;
  std::string tcsv;
  auto* transfer = bench->add_subcommand("transfer", "transfer bandwidth");
  transfer->add_option("--min-bytes", topt.min_bytes, "smallest size")
      ->capture_default_str();
  transfer->add_option("--max-bytes", topt.max_bytes, "largest size")
      ->capture_default_str();
  transfer->add_option("--factor", topt.factor, "size growth factor")
      ->capture_default_str();
  transfer->add_option("--reps", topt.reps, "repetitions per size (>= 3)")
      ->capture_default_str();
  transfer->add_option("--device", topt.device_id, "device id")
      ->capture_default_str();
  transfer->add_option("--csv", tcsv, "output CSV")->required();
  add_timing_flags(transfer, ttiming);

  GemmBenchOptions gopt;
  TimingFlags gtiming;
  std::string gcsv, gprec = "f64";
  auto* gemm = bench->add_subcommand("gemm", "GEMM throughput");
  gemm->add_option("--sizes", gopt.sizes, "square dimensions (>= 16)")
      ->delimiter(',')
      ->capture_default_str();
  gemm->add_option("--reps", gopt.reps, "repetitions per size (>= 3)")
      ->capture_default_str();
  gemm->add_option("--precision", gprec, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  gemm->add_option("--device", gopt.device_id, "device id")
      ->capture_default_str();
  gemm->add_option("--csv", gcsv, "output CSV")->required();
  add_timing_flags(gemm, gtiming);

  std::string config_path, solve_csv;
  auto* run_cmd = solve->add_subcommand("run", "run one simulation");
  run_cmd->add_option("--config", config_path, "solver config file")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--csv", solve_csv, "diagnostics CSV");

  std::string conv_config, conv_csv;
  std::vector<int> orders = {1, 2, 3, 4};
  std::vector<std::int64_t> meshes = {8, 16, 32, 64};
  auto* converge = solve->add_subcommand("converge", "convergence study");
  converge->add_option("--config", conv_config, "base solver config file")
      ->check(CLI::ExistingFile);
  converge->add_option("--orders", orders, "polynomial orders")
      ->delimiter(',')
      ->capture_default_str();
  converge->add_option("--meshes", meshes, "element counts")
      ->delimiter(',')
      ->capture_default_str();
  converge->add_option("--csv", conv_csv, "order table CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadArguments;
  }

  try {
    Runtime runtime(RuntimeOptions::from_env());
    for (const auto* path : {&tcsv, &gcsv, &solve_csv, &conv_csv}) {
      check_writable(*path);
    }
    if (transfer->parsed()) {
      apply_timing(runtime, topt.device_id, ttiming);
      auto records = bench_transfer(runtime, topt);
      write_bench_csv(tcsv, records);
      out << "wrote " << records.size() << " records to " << tcsv << "\n";
    } else if (gemm->parsed()) {
      gopt.precision = gprec == "f32" ? Precision::f32 : Precision::f64;
      apply_timing(runtime, gopt.device_id, gtiming);
      auto records = bench_gemm(runtime, gopt);
      write_bench_csv(gcsv, records);
      out << "wrote " << records.size() << " records to " << gcsv << "\n";
    } else if (run_cmd->parsed()) {
      const auto cfg = fr::load_solver_config(config_path);
      const auto result = fr::run_simulation(cfg, runtime);
      if (!solve_csv.empty()) {
        fr::write_diagnostics_csv(std::filesystem::path(solve_csv),
                                  result.diagnostics);
      }
      print_solve_summary(out, result);
    } else if (converge->parsed()) {
      fr::SolverConfig base;
      base.dt = 2.5e-4;
      if (!conv_config.empty()) base = fr::load_solver_config(conv_config);
      const auto rows = fr::convergence_study(base, orders, meshes, runtime);
      char buf[128];
      out << "   p  elements        l2_error   order\n";
      for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%4d %9lld %15.6e %7.3f\n", r.p,
                      static_cast<long long>(r.n_elements), r.l2_error, r.order);
        out << buf;
      }
      if (!conv_csv.empty()) write_convergence_csv(conv_csv, rows);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::invalid_argument ? kExitBadArguments
                                              : kExitBenchmarkError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitBenchmarkError;
  }
  return kExitOk;
}

}  // namespace streamforge::cli
