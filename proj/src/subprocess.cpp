#include "seccoder/subprocess.hpp"

#include <sys/wait.h>

#include <array>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "seccoder/error.hpp"
#include "seccoder/hash.hpp"

namespace seccoder {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<std::uint64_t> counter{0};
  const std::uint64_t salt = splitmix64(std::random_device{}() ^ counter.fetch_add(1));
  path_ = fs::temp_directory_path() / ("seccoder-" + hex64(salt));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

CommandResult run_command(const std::string& command) {
  const std::string full = command + " 2>&1";
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) throw EnvironmentError("cannot spawn shell for: " + command);
  CommandResult r;
  std::array<char, 4096> buf;
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), got);
  const int status = ::pclose(pipe);
  if (status == -1) throw EnvironmentError("cannot reap: " + command);
  if (WIFEXITED(status)) {
    r.exit_code = WEXITSTATUS(status);
  } else {
    r.exit_code = 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  }
  return r;
}

std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += '\'';
  return out;
}

std::string substitute(std::string tmpl, std::string_view key, std::string_view value) {
  const std::string needle = "{" + std::string(key) + "}";
  std::size_t pos = 0;
  while ((pos = tmpl.find(needle, pos)) != std::string::npos) {
    tmpl.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return tmpl;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + p.string());
}

}  // namespace seccoder
