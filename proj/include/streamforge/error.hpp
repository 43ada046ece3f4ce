#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace streamforge {

enum class Errc {
  device_not_found,
  invalid_argument,
  invalid_handle,
  invalid_state,
  out_of_device_memory,
  range_error,
  library_load_error,
  symbol_not_found,
  kernel_failure,
  codegen_error,
  compile_error,
  numerical_divergence,
  io_error,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure the runtime reports is an Error carrying an Errc. Failures
/// raised by an asynchronous request also carry the request's sequence number.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message,
        std::optional<std::uint64_t> seq = std::nullopt);

  Errc code() const noexcept { return code_; }
  std::optional<std::uint64_t> seq() const noexcept { return seq_; }

  /// Same error re-tagged with the sequence number of the failing request.
  Error with_seq(std::uint64_t seq) const;

  /// The message without the "request #N" prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::optional<std::uint64_t> seq_;
  std::string detail_;
};

}  // namespace streamforge
