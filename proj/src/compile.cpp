#include <openssl/evp.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>

#include "streamforge/codegen.hpp"
#include "streamforge/error.hpp"

namespace streamforge {

namespace {

constexpr const char* kDefaultCompiler = "cc -O2 -fopenmp -shared -fPIC";

std::mutex& compile_mutex() {
  static std::mutex mu;
  return mu;
}

std::atomic<std::uint64_t> g_invocations{0};

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    throw Error(Errc::io_error, "cannot write " + p.string());
  }
}

}  // namespace

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(Errc::io_error, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string default_compiler_command() {
  if (const char* env = std::getenv("STREAMFORGE_CC"); env && *env) {
    return env;
  }
  return kDefaultCompiler;
}

bool compiler_available(const CompileOptions& options) {
  const std::string cmd =
      options.compiler_command.value_or(default_compiler_command());
  std::istringstream words(cmd);
  std::string exe;
  words >> exe;
  if (exe.empty()) {
    return false;
  }
  if (exe.find('/') != std::string::npos) {
    return ::access(exe.c_str(), X_OK) == 0;
  }
  const char* path = std::getenv("PATH");
  std::istringstream dirs(path ? path : "");
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    const auto candidate = std::filesystem::path(dir.empty() ? "." : dir) / exe;
    if (::access(candidate.c_str(), X_OK) == 0) {
      return true;
    }
  }
  return false;
}

std::uint64_t compiler_invocations() { return g_invocations.load(); }

std::filesystem::path compile_to_library(const GeneratedSource& source,
                                         const CompileOptions& options) {
  namespace fs = std::filesystem;
  const std::string hash = sha256_hex(source.text);
  const std::string stem = source.kernel_name + "-" + hash.substr(0, 8);

  std::error_code ec;
  fs::create_directories(options.cache_dir, ec);
  if (ec) {
    throw Error(Errc::io_error, "cannot create cache directory " +
                                    options.cache_dir.string() + ": " +
                                    ec.message());
  }
  const fs::path dir = fs::absolute(options.cache_dir);
  const fs::path c_path = dir / (stem + ".c");
  const fs::path so_path = dir / (stem + ".so");

  std::lock_guard lk(compile_mutex());
  // The 8-digit name is only a prefix of the key; confirm the stored source
  // matches before trusting a cached module.
  if (fs::exists(so_path) && read_file(c_path) == source.text) {
    return so_path;
  }
  write_file(c_path, source.text);

  const fs::path tmp_path =
      dir / (stem + ".so.tmp" + std::to_string(::getpid()));
  const std::string cmd =
      options.compiler_command.value_or(default_compiler_command()) + " -o " +
      shell_quote(tmp_path.string()) + " " + shell_quote(c_path.string()) +
      " -lm 2>&1";
  ++g_invocations;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    throw Error(Errc::compile_error, "cannot launch compiler: " + cmd);
  }
  std::string diagnostics;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) {
    diagnostics.append(buf, n);
  }
  const int status = ::pclose(pipe);
  const bool ok = status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  if (!ok) {
    fs::remove(tmp_path, ec);
    throw Error(Errc::compile_error,
                "compiling " + c_path.string() + " failed (" + cmd + "):\n" +
                    diagnostics);
  }
  fs::rename(tmp_path, so_path, ec);
  if (ec) {
    throw Error(Errc::io_error,
                "cannot move module into place: " + ec.message());
  }
  return so_path;
}

}  // namespace streamforge
