#include "darkhash/kernel.hpp"

#include <unistd.h>

#include <array>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <sstream>
#include <string>

#include "darkhash/code_file.hpp"
#include "darkhash/errors.hpp"

namespace darkhash {

namespace {

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

bool executable(const std::filesystem::path& p) {
  return std::filesystem::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0;
}

// Removes its directory on scope exit.
struct ScratchDir {
  std::filesystem::path path;
  ScratchDir() {
    static std::atomic<unsigned> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("darkhash-kernel-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace

std::optional<std::filesystem::path> find_kernel() {
  if (const char* env = std::getenv("DARKHASH_KERNEL"); env && *env) {
    if (executable(env)) return std::filesystem::path(env);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::stringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    auto candidate = std::filesystem::path(dir) / "hamming-kernel";
    if (executable(candidate)) return candidate;
  }
  return std::nullopt;
}

double kernel_map(const std::filesystem::path& exe, const CodeDatabase& queries, const CodeDatabase& db,
                  std::optional<std::size_t> target) {
  ScratchDir scratch;
  const auto qpath = scratch.path / "queries.dhc";
  const auto dpath = scratch.path / "db.dhc";
  write_code_file(qpath, queries);
  write_code_file(dpath, db);

  std::string cmd = shell_quote(exe.string()) + " map --queries " + shell_quote(qpath.string()) + " --db " +
                    shell_quote(dpath.string());
  if (target) cmd += " --target " + std::to_string(*target);

  std::unique_ptr<FILE, int (*)(FILE*)> pipe(::popen(cmd.c_str(), "r"), ::pclose);
  if (!pipe) throw KernelError("cannot start kernel " + exe.string());
  std::string output;
  std::array<char, 256> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe.get())) output += buf.data();
  const int status = ::pclose(pipe.release());
  if (status != 0) throw KernelError("kernel exited with status " + std::to_string(status));

  try {
    std::size_t used = 0;
    const double value = std::stod(output, &used);
    if (output.find_first_not_of(" \t\r\n", used) != std::string::npos) throw std::invalid_argument("trailing");
    return value;
  } catch (const std::exception&) {
    throw KernelError("kernel printed an unparsable metric: '" + output + "'");
  }
}

}  // namespace darkhash
