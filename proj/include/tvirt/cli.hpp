#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tvirt::cli {

enum ExitCode : int { ok = 0, failure = 1, usage = 2, data = 3, infeasible = 4 };

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Provenance of one CLI invocation. Reports carry only the manifest file
/// name and config_digest(), so they stay byte-identical across reruns of the
/// same configuration on the same inputs.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::filesystem::path> inputs;  // role -> path
  std::map<std::string, std::string> input_digests;     // role -> sha256
  std::vector<std::string> outputs;
  std::string version;
  std::string started_at;
  std::string finished_at;
  int threads = 0;

  void add_input(const std::string& role, const std::filesystem::path& path);
  /// Digest over command, config, seeds and input digests; excludes paths,
  /// thread count and timestamps.
  std::string config_digest() const;
  nlohmann::ordered_json to_json() const;
};

/// Runs one subcommand; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace tvirt::cli
