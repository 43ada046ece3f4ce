#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "streamforge/types.hpp"

namespace streamforge {

enum class Intent : std::uint8_t { in, out, inout, scalar };
enum class BaseType : std::uint8_t { fpdtype, i64 };

/// Memory order of per-point vectors (params with extent > 1).
enum class PointLayout : std::uint8_t {
  component_major,  // component k of point i at base[k*npts + i]
  point_major,      // component k of point i at base[i*extent + k]
};

struct KernelParam {
  std::string name;
  Intent intent = Intent::in;
  BaseType base_type = BaseType::fpdtype;
  std::int64_t extent = 1;
  // Subscripted in the body even at extent 1 (extents tied to nvars/ndims).
  bool indexed = false;

  bool is_vector() const noexcept { return indexed || extent > 1; }
};

/// `for index in 0..bound` unrolled at generation time. `bound` is "nvars",
/// "ndims" or a decimal count. When `list` names an entry of
/// KernelContext::expr_lists, `${element}` yields its index-th entry
/// (missing entries read as "0").
struct BodyLoop {
  std::string index = "i";
  std::string bound = "nvars";
  std::string element;
  std::string list;
  std::vector<std::string> statements;
};

using BodyItem = std::variant<std::string, BodyLoop>;

struct KernelContext {
  int ndims = 1;
  int nvars = 1;
  Precision precision = Precision::f64;
  std::map<std::string, std::string> exprs;
  std::map<std::string, std::vector<std::string>> expr_lists;
};

/// A point-wise kernel: `body` is executed once per point with scalar
/// semantics. Inside the body a vector param (extent > 1 or `indexed`) is
/// subscripted as name[0..extent-1], other params are plain values.
struct KernelSpec {
  std::string name;
  std::vector<KernelParam> params;
  std::vector<BodyItem> body;
  KernelContext context;
  PointLayout layout = PointLayout::component_major;
};

struct GeneratedSource {
  std::string kernel_name;
  std::string text;
  std::vector<KernelParam> pruned_params;
  std::string entry_symbol;
  Precision precision = Precision::f64;
};

/// Unrolls loops and substitutes `${...}` placeholders. Throws
/// Error(codegen_error) naming any placeholder that does not resolve.
std::vector<std::string> expand_body(const KernelSpec& spec);

/// Params whose name occurs as an identifier token in the expanded body
/// (comments ignored), in declaration order.
std::vector<KernelParam> prune_unused_args(
    const KernelSpec& spec, const std::vector<std::string>& expanded_body);

/// At f32, appends `f` to every unsuffixed floating literal (1.0, .5, 2.,
/// 1e-3, 1.5E+2). Integers, hex literals and identifiers are untouched.
/// Identity at f64. Idempotent.
std::string suffix_float_constants(const std::string& source,
                                   Precision precision);

/// Emits a C translation unit with one exported entry point
///
///   void <name>(const int64_t* npts, <pruned params>...)
///
/// where every argument is a device address: array params point at npts
/// points' worth of data, scalar params at their 8-byte encoding (double for
/// fpdtype, int64 for i64). The entry loops over points with an OpenMP
/// parallel-for and calls a static per-point function.
GeneratedSource generate_pointwise_source(const KernelSpec& spec);

struct CompileOptions {
  std::filesystem::path cache_dir = ".streamforge-cache";
  /// Defaults to $STREAMFORGE_CC, else "cc -O2 -fopenmp -shared -fPIC".
  std::optional<std::string> compiler_command;
};

std::string default_compiler_command();

/// True when the compiler command's executable can be found.
bool compiler_available(const CompileOptions& options = {});

/// Writes `<kernel>-<hash8>.c` into the cache directory and compiles it to
/// `<kernel>-<hash8>.so`, returning the module path. Identical source text is
/// a cache hit and runs no compiler. Throws Error(compile_error) carrying the
/// compiler diagnostics, Error(io_error) when the cache is not writable.
std::filesystem::path compile_to_library(const GeneratedSource& source,
                                         const CompileOptions& options = {});

/// Number of compiler processes launched by this process.
std::uint64_t compiler_invocations();

/// Lowercase hex SHA-256 of `text`.
std::string sha256_hex(const std::string& text);

}  // namespace streamforge
