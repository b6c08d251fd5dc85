#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace summ {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Resolved configuration (TOML, every default written out) plus content
// hashes of the inputs read and artifacts written. Feeding the file back
// through --config repeats the run.
struct RunManifest {
  std::string config;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> artifacts;

  std::string render() const;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace summ
