#pragma once

// Stage outputs and their manifests. A manifest lists the stage's inputs and
// artifacts with SHA-256 content hashes; volatile files (timings) are written
// but left out of it so reruns stay byte-identical.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ehrcvd::cli {

inline constexpr int kManifestSchemaVersion = 1;

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Reads a whole file; throws DataError when it cannot be opened.
std::string read_text(const std::filesystem::path& path);

class StageWriter {
 public:
  StageWriter(std::filesystem::path stage_dir, std::string stage);

  const std::filesystem::path& dir() const { return dir_; }

  /// Records a hashed input (a file, or in-memory upstream content).
  void add_input(const std::string& name, const std::string& sha256);
  void add_seed(const std::string& name, std::uint64_t value);
  void set_config(const nlohmann::json& config);

  /// Writes `content` to dir()/name and hashes it.
  void write(const std::string& name, std::string_view content);
  /// Written but not listed in the manifest.
  void write_volatile(const std::string& name, std::string_view content);

  /// Writes manifest.json; returns its JSON.
  nlohmann::json finish();

 private:
  std::filesystem::path dir_;
  std::string stage_;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json seeds_ = nlohmann::json::object();
  nlohmann::json config_;
  nlohmann::json artifacts_ = nlohmann::json::array();
};

}  // namespace ehrcvd::cli
