#include <cmath>

#include "gama/cli.hpp"
#include "gama/io.hpp"

namespace gama::cli {

namespace {
constexpr const char* kVersion = "0.1.0";
}

void RunManifest::add_input(const std::filesystem::path& path) { inputs[path.string()] = io::file_checksum(path); }

void RunManifest::add_output(const std::filesystem::path& path) { outputs[path.string()] = io::file_checksum(path); }

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},
          {"config", config},
          {"seed", seed},
          {"inputs", inputs},
          {"outputs", outputs},
          {"wall_clock_seconds", std::round(wall_clock_seconds * 1000.0) / 1000.0},
          {"versions", {{"gama", kVersion}, {"dataset_format", 1}, {"checkpoint_format", 1}, {"bank_format", 1}}}};
}

std::filesystem::path manifest_path(const std::filesystem::path& primary_output) {
  auto p = primary_output;
  p += ".run.json";
  return p;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& primary_output) {
  io::write_text_atomic(manifest_path(primary_output), manifest.to_json().dump(2) + "\n");
}

}  // namespace gama::cli
