#ifndef JACOBI_LDP_MANIFEST_HPP
#define JACOBI_LDP_MANIFEST_HPP

#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace jacobi_ldp {

inline constexpr const char* kToolkitVersion = "1.0.0";

inline std::string sha256_hex(const std::string& data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256: OpenSSL digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

/// Real number with 17 significant digits, the CSV convention.
inline std::string csv_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Small CSV builder: a header row, then rows of preformatted fields.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : columns_(header.size()) { add_row(header); }

  void add_row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw std::logic_error("CsvTable: wrong number of fields");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) text_ += ',';
      text_ += fields[i];
    }
    text_ += '\n';
  }

  const std::string& text() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

/// Writes output files into one directory and records each in the manifest
/// with its SHA-256.
class RunRecorder {
 public:
  RunRecorder(std::filesystem::path dir, std::string command, std::string config_text, std::uint64_t seed)
      : dir_(std::move(dir)), command_(std::move(command)), config_text_(std::move(config_text)), seed_(seed) {}

  const std::filesystem::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / name;
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write " + path.string());
      out << content;
    }
    files_[name] = {sha256_hex(content), content.size()};
  }

  void write_json(const std::string& name, const nlohmann::ordered_json& j) { write(name, j.dump(2) + "\n"); }

  /// Times `fn` under `stage` in the manifest.
  template <class F>
  decltype(auto) stage(const std::string& name, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    struct Stop {
      RunRecorder* self;
      std::string name;
      std::chrono::steady_clock::time_point start;
      ~Stop() {
        self->timings_.push_back(
            {name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
      }
    } stop{this, name, start};
    return fn();
  }

  void note_stream(const std::string& label, std::uint64_t stream) { streams_[label] = stream; }

  /// Writes manifest.json listing every file written so far.
  void finish(int threads) {
    nlohmann::ordered_json m;
    m["toolkit_version"] = kToolkitVersion;
    m["command"] = command_;
    m["config_sha256"] = sha256_hex(config_text_);
    m["seed"] = seed_;
    m["rng"] = "xoshiro256** seeded by splitmix64; stream k = k jumps of 2^128";
    m["streams"] = streams_;
    m["threads"] = threads;
    nlohmann::ordered_json t = nlohmann::ordered_json::array();
    for (const auto& [name, secs] : timings_) t.push_back({{"stage", name}, {"seconds", secs}});
    m["stage_timings"] = t;
    nlohmann::ordered_json f = nlohmann::ordered_json::array();
    for (const auto& [name, info] : files_) {
      f.push_back({{"path", name}, {"sha256", info.first}, {"bytes", info.second}});
    }
    m["files"] = f;
    std::filesystem::create_directories(dir_);
    std::ofstream out(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
    out << m.dump(2) << "\n";
  }

 private:
  std::filesystem::path dir_;
  std::string command_;
  std::string config_text_;
  std::uint64_t seed_;
  std::map<std::string, std::pair<std::string, std::size_t>> files_;
  std::vector<std::pair<std::string, double>> timings_;
  std::map<std::string, std::uint64_t> streams_;
};

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_MANIFEST_HPP
