#include "teleopforge/cli/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace teleopforge::cli {

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["argv"] = argv;
  j["flags"] = flags;
  j["config_file"] = config_file;
  j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
  j["output_dir"] = output_dir;
  j["version"] = version;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["exit_code"] = exit_code ? nlohmann::ordered_json(*exit_code) : nlohmann::ordered_json(nullptr);
  return j.dump(2);
}

void RunManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << to_json() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace teleopforge::cli
