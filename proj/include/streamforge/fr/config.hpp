#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "streamforge/types.hpp"

namespace streamforge::fr {

enum class SolverBackend : std::uint8_t { intrinsic, compiled };

std::string_view to_string(SolverBackend b) noexcept;

/// Parameters of a 1-D periodic advection run, du/dt + a du/dx = S(x, t).
///
/// As a key-value file (`key = value`, `#` comments):
///
///   p                    polynomial order, 1..10
///   n_elements           number of elements, >= 2
///   x0, x1               domain, x0 < x1, periodic
///   a                    advection speed
///   dt                   time step (> 0)
///   t_end                final time (>= 0)
///   precision            f32 | f64
///   source_term          expression in x and t; empty for none
///   initial_condition    expression in x (default sin(2*pi*x))
///   backend              intrinsic | compiled
///   diagnostic_interval  steps between diagnostics, 0 = first and last only
///   cache_dir            compiled-kernel cache (compiled backend)
///   compiler             compiler command override (compiled backend)
struct SolverConfig {
  int p = 3;
  std::int64_t n_elements = 32;
  double x0 = 0.0;
  double x1 = 1.0;
  double a = 1.0;
  double dt = 1e-3;
  double t_end = 1.0;
  Precision precision = Precision::f64;
  std::string source_term_expr;
  std::string initial_condition = "sin(2*pi*x)";
  SolverBackend backend = SolverBackend::intrinsic;
  std::int64_t diagnostic_interval = 0;
  std::filesystem::path cache_dir = ".streamforge-cache";
  std::optional<std::string> compiler_command;

  double element_width() const noexcept {
    return (x1 - x0) / static_cast<double>(n_elements);
  }
  std::int64_t npts() const noexcept { return n_elements * (p + 1); }

  /// Throws Error(invalid_argument) naming the first offending field,
  /// including unparsable expressions.
  void validate() const;
};

/// Applies the recognised keys of `kv` on top of `base`. Unknown keys and
/// malformed values throw Error(invalid_argument).
SolverConfig solver_config_from(const std::map<std::string, std::string>& kv,
                                SolverConfig base = {});

/// Reads and validates a config file. Error(io_error) if unreadable.
SolverConfig load_solver_config(const std::filesystem::path& path);

/// Key-value text that solver_config_from reads back to an equal config.
std::string to_key_value_text(const SolverConfig& config);

}  // namespace streamforge::fr
