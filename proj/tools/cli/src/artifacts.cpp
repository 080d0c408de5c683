#include "ehrcvd_cli/artifacts.hpp"

#include <array>
#include <fstream>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "ehrcvd/errors.hpp"

namespace ehrcvd::cli {

namespace fs = std::filesystem;

namespace {

std::string to_hex(const unsigned char* data, unsigned int n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (unsigned int i = 0; i < n; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 0xf]);
  }
  return out;
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw Error("SHA-256 computation failed");
  }
  return to_hex(digest.data(), len);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

StageWriter::StageWriter(fs::path stage_dir, std::string stage)
    : dir_(std::move(stage_dir)), stage_(std::move(stage)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw DataError("cannot create " + dir_.string() + ": " + ec.message());
}

void StageWriter::add_input(const std::string& name, const std::string& sha256) {
  inputs_.push_back({{"name", name}, {"sha256", sha256}});
}

void StageWriter::add_seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }

void StageWriter::set_config(const nlohmann::json& config) { config_ = config; }

void StageWriter::write(const std::string& name, std::string_view content) {
  write_file(dir_ / name, content);
  artifacts_.push_back({{"path", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
}

void StageWriter::write_volatile(const std::string& name, std::string_view content) {
  write_file(dir_ / name, content);
}

nlohmann::json StageWriter::finish() {
  nlohmann::json m = {{"kind", "manifest"},
                      {"schema_version", kManifestSchemaVersion},
                      {"stage", stage_},
                      {"inputs", inputs_},
                      {"seeds", seeds_},
                      {"artifacts", artifacts_}};
  if (!config_.is_null()) {
    m["config"] = config_;
    m["config_sha256"] = sha256_hex(config_.dump());
  }
  write_file(dir_ / "manifest.json", m.dump(2) + "\n");
  return m;
}

}  // namespace ehrcvd::cli
