#include "streamforge/error.hpp"

namespace streamforge {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::device_not_found: return "device-not-found";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::invalid_handle: return "invalid-handle";
    case Errc::invalid_state: return "invalid-state";
    case Errc::out_of_device_memory: return "out-of-device-memory";
    case Errc::range_error: return "range-error";
    case Errc::library_load_error: return "library-load-error";
    case Errc::symbol_not_found: return "symbol-not-found";
    case Errc::kernel_failure: return "kernel-failure";
    case Errc::codegen_error: return "codegen-error";
    case Errc::compile_error: return "compile-error";
    case Errc::numerical_divergence: return "numerical-divergence";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

namespace {

std::string format_message(Errc code, const std::string& detail,
                           std::optional<std::uint64_t> seq) {
  std::string out(to_string(code));
  if (seq) {
    out += " (request #" + std::to_string(*seq) + ")";
  }
  out += ": ";
  out += detail;
  return out;
}

}  // namespace

Error::Error(Errc code, const std::string& message,
             std::optional<std::uint64_t> seq)
    : std::runtime_error(format_message(code, message, seq)),
      code_(code),
      seq_(seq),
      detail_(message) {}

Error Error::with_seq(std::uint64_t seq) const {
  return Error(code_, detail_, seq);
}

}  // namespace streamforge
