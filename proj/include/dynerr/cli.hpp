#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace dynerr {

inline constexpr const char* kVersion = "0.1.0";

// Provenance record written next to every CLI output.
struct RunManifest {
  std::string command_line;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> input_digests;  // path -> sha256 hex
  std::string version = kVersion;
  std::string timestamp;
};

std::string sha256_file(const std::filesystem::path& path);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

// Entry point shared by the dynerr binary and the tests. args[0] is the
// program name. Returns the process exit code; failures print one line
// "error: <message>" to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dynerr
