#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace streamforge {

/// Transfer-time model of the emulated device: every request costs
/// `latency_us`, transfers additionally cost nbytes / bandwidth.
struct TimingModel {
  double latency_us = 0.0;
  double bandwidth_bytes_per_s = 0.0;

  double transfer_seconds(std::size_t nbytes) const noexcept {
    return latency_us * 1e-6 +
           static_cast<double>(nbytes) / bandwidth_bytes_per_s;
  }
  double request_seconds() const noexcept { return latency_us * 1e-6; }
  double effective_bandwidth(std::size_t nbytes) const noexcept {
    return static_cast<double>(nbytes) / transfer_seconds(nbytes);
  }
};

struct DeviceConfig {
  static constexpr std::size_t kDefaultArenaBytes = std::size_t{1} << 30;

  std::size_t arena_bytes = kDefaultArenaBytes;
  std::optional<TimingModel> timing;
  // Sleep for the modeled duration so wall clocks see the model too.
  bool realistic_timing = false;
};

/// Parsed `key = value` text. Blank lines and `#` comments are ignored.
/// Throws Error(io_error) if the file cannot be read, Error(invalid_argument)
/// on malformed lines.
std::map<std::string, std::string> read_key_value_file(
    const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_value_text(
    const std::string& text);

/// Recognised keys: arena_bytes, latency_us, bandwidth_bytes_per_s,
/// realistic_timing (true/false). The timing model is installed only when
/// bandwidth_bytes_per_s is present.
DeviceConfig device_config_from(const std::map<std::string, std::string>& kv,
                                DeviceConfig base = {});

}  // namespace streamforge
