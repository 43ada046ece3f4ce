#include "streamforge/fr/config.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "streamforge/device_config.hpp"
#include "streamforge/error.hpp"
#include "streamforge/expression.hpp"

namespace streamforge::fr {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(Errc::invalid_argument, "config key '" + key + "': " + what);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad(key, "expected a number, got '" + v + "'");
  }
  if (used != v.size()) bad(key, "expected a number, got '" + v + "'");
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    bad(key, "expected an integer, got '" + v + "'");
  }
  if (used != v.size()) bad(key, "expected an integer, got '" + v + "'");
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(SolverBackend b) noexcept {
  return b == SolverBackend::compiled ? "compiled" : "intrinsic";
}

void SolverConfig::validate() const {
  if (p < 1 || p > 10) bad("p", "must be in 1..10");
  if (n_elements < 2) bad("n_elements", "must be at least 2");
  if (!std::isfinite(x0) || !std::isfinite(x1) || !(x0 < x1)) {
    bad("x1", "domain must satisfy x0 < x1");
  }
  if (!std::isfinite(a)) bad("a", "must be finite");
  if (!(dt > 0.0) || !std::isfinite(dt)) bad("dt", "must be positive");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) {
    bad("t_end", "must be non-negative");
  }
  if (diagnostic_interval < 0) bad("diagnostic_interval", "must be >= 0");
  try {
    if (!source_term_expr.empty()) Expression::parse(source_term_expr);
  } catch (const Error& e) {
    bad("source_term", e.what());
  }
  try {
    Expression::parse(initial_condition);
  } catch (const Error& e) {
    bad("initial_condition", e.what());
  }
}

SolverConfig solver_config_from(const std::map<std::string, std::string>& kv,
                                SolverConfig c) {
  for (const auto& [key, v] : kv) {
    if (key == "p") {
      const auto p = parse_int(key, v);
      if (p < 1 || p > 10) bad(key, "must be in 1..10");
      c.p = static_cast<int>(p);
    } else if (key == "n_elements") {
      c.n_elements = parse_int(key, v);
    } else if (key == "x0") {
      c.x0 = parse_double(key, v);
    } else if (key == "x1") {
      c.x1 = parse_double(key, v);
    } else if (key == "a") {
      c.a = parse_double(key, v);
    } else if (key == "dt") {
      c.dt = parse_double(key, v);
    } else if (key == "t_end") {
      c.t_end = parse_double(key, v);
    } else if (key == "precision") {
      if (v == "f32") {
        c.precision = Precision::f32;
      } else if (v == "f64") {
        c.precision = Precision::f64;
      } else {
        bad(key, "expected f32 or f64, got '" + v + "'");
      }
    } else if (key == "source_term") {
      c.source_term_expr = v;
    } else if (key == "initial_condition") {
      c.initial_condition = v;
    } else if (key == "backend") {
      if (v == "intrinsic") {
        c.backend = SolverBackend::intrinsic;
      } else if (v == "compiled") {
        c.backend = SolverBackend::compiled;
      } else {
        bad(key, "expected intrinsic or compiled, got '" + v + "'");
      }
    } else if (key == "diagnostic_interval") {
      c.diagnostic_interval = parse_int(key, v);
    } else if (key == "cache_dir") {
      c.cache_dir = v;
    } else if (key == "compiler") {
      c.compiler_command = v;
    } else {
      bad(key, "unknown key");
    }
  }
  return c;
}

SolverConfig load_solver_config(const std::filesystem::path& path) {
  auto c = solver_config_from(read_key_value_file(path));
  c.validate();
  return c;
}

std::string to_key_value_text(const SolverConfig& c) {
  std::ostringstream os;
  os << "p = " << c.p << "\n"
     << "n_elements = " << c.n_elements << "\n"
     << "x0 = " << format_double(c.x0) << "\n"
     << "x1 = " << format_double(c.x1) << "\n"
     << "a = " << format_double(c.a) << "\n"
     << "dt = " << format_double(c.dt) << "\n"
     << "t_end = " << format_double(c.t_end) << "\n"
     << "precision = " << to_string(c.precision) << "\n"
     << "source_term = " << c.source_term_expr << "\n"
     << "initial_condition = " << c.initial_condition << "\n"
     << "backend = " << to_string(c.backend) << "\n"
     << "diagnostic_interval = " << c.diagnostic_interval << "\n"
     << "cache_dir = " << c.cache_dir.string() << "\n";
  if (c.compiler_command) {
    os << "compiler = " << *c.compiler_command << "\n";
  }
  return os.str();
}

}  // namespace streamforge::fr
