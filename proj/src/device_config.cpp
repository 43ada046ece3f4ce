#include "streamforge/device_config.hpp"

#include <fstream>
#include <sstream>

#include "streamforge/error.hpp"

namespace streamforge {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) {
      throw std::invalid_argument(v);
    }
    return out;
  } catch (const std::exception&) {
    throw Error(Errc::invalid_argument,
                "key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    return false;
  }
  throw Error(Errc::invalid_argument,
              "key '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> parse_key_value_text(
    const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::invalid_argument,
                  "line " + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw Error(Errc::invalid_argument,
                  "line " + std::to_string(lineno) + ": empty key");
    }
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> read_key_value_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::io_error, "cannot read '" + path.string() + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_value_text(ss.str());
}

DeviceConfig device_config_from(const std::map<std::string, std::string>& kv,
                                DeviceConfig base) {
  if (auto it = kv.find("arena_bytes"); it != kv.end()) {
    const double v = parse_double(it->first, it->second);
    if (v < 1) {
      throw Error(Errc::invalid_argument, "arena_bytes must be positive");
    }
    base.arena_bytes = static_cast<std::size_t>(v);
  }
  if (auto it = kv.find("bandwidth_bytes_per_s"); it != kv.end()) {
    TimingModel model;
    model.bandwidth_bytes_per_s = parse_double(it->first, it->second);
    if (model.bandwidth_bytes_per_s <= 0) {
      throw Error(Errc::invalid_argument,
                  "bandwidth_bytes_per_s must be positive");
    }
    if (auto lat = kv.find("latency_us"); lat != kv.end()) {
      model.latency_us = parse_double(lat->first, lat->second);
    }
    base.timing = model;
  }
  if (auto it = kv.find("realistic_timing"); it != kv.end()) {
    base.realistic_timing = parse_bool(it->first, it->second);
  }
  return base;
}

}  // namespace streamforge
