#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace seccoder {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = 0;
  std::string output;  ///< stdout and stderr interleaved
};

/// Runs `command` through /bin/sh. Exit code 127 means "not found".
CommandResult run_command(const std::string& command);

std::string shell_quote(std::string_view s);
/// Replaces every "{key}" in `tmpl`.
std::string substitute(std::string tmpl, std::string_view key, std::string_view value);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);

}  // namespace seccoder
