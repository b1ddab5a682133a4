#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace teleopforge::cli {

/// What a run was asked to do, written next to its outputs so it can be repeated.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> argv;
  std::string flags;  // every option with its effective value, one "name=value" per line
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string version;
  double started_at = 0.0;  // ms since epoch
  double finished_at = 0.0;
  std::optional<int> exit_code;

  std::string to_json() const;
  /// Writes atomically (temp file + rename), creating parent directories.
  void write(const std::filesystem::path& path) const;
};

}  // namespace teleopforge::cli
