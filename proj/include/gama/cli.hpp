#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace gama::cli {

/// Record of one command invocation, written next to its primary output.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();  // fully resolved settings
  uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> io::file_checksum
  std::map<std::string, std::string> outputs;  // path -> io::file_checksum
  double wall_clock_seconds = 0.0;

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

std::filesystem::path manifest_path(const std::filesystem::path& primary_output);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& primary_output);

/// Runs one `gama` invocation (args exclude the program name) and returns the
/// process exit code: 0 ok, 1 internal, 2 config, 3 data, 4 compatibility.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gama::cli
