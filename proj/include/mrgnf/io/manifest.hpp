// SPDX-License-Identifier: Apache-2.0
//
// Run manifests: one manifest.json per output directory, one entry per command that
// wrote into it, with SHA-256 hashes of inputs and outputs.
#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "mrgnf/io/binary.hpp"

namespace mrgnf::io {

inline constexpr const char* kToolVersion = "0.1.0";

/// True when MRGNF_DETERMINISTIC=1. All reductions in this library already run in a
/// fixed order; the flag is recorded so runs can be audited.
inline bool deterministic_mode() {
  const char* v = std::getenv("MRGNF_DETERMINISTIC");
  return v && std::string(v) == "1";
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

struct FileHash {
  std::string path;  ///< outputs: relative to the manifest directory; inputs: as given
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::string config;  ///< resolved configuration text
  std::string config_hash;
  std::vector<FileHash> inputs;
  std::vector<FileHash> outputs;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::string timestamp;
  bool deterministic = false;
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Fills hashes, the timestamp and the determinism flag for a finished command.
inline RunManifest make_manifest(const std::string& command, const std::string& config, std::uint64_t seed,
                                 const std::vector<std::string>& inputs, const std::string& dir,
                                 const std::vector<std::string>& outputs) {
  RunManifest m;
  m.command = command;
  m.config = config;
  m.config_hash = sha256_hex(config);
  m.seed = seed;
  m.timestamp = utc_timestamp();
  m.deterministic = deterministic_mode();
  for (const auto& p : inputs) m.inputs.push_back({p, sha256_file(p)});
  for (const auto& p : outputs) {
    const auto rel = std::filesystem::relative(p, dir).generic_string();
    m.outputs.push_back({rel, sha256_file(p)});
  }
  return m;
}

inline nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
  auto files = [](const std::vector<FileHash>& v) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  return {{"command", m.command},   {"config", m.config},         {"config_hash", m.config_hash},
          {"inputs", files(m.inputs)}, {"outputs", files(m.outputs)}, {"seed", m.seed},
          {"tool_version", m.tool_version}, {"timestamp", m.timestamp}, {"deterministic", m.deterministic}};
}

inline RunManifest manifest_from_json(const nlohmann::ordered_json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& f : j.at("inputs")) m.inputs.push_back({f.at("path"), f.at("sha256")});
  for (const auto& f : j.at("outputs")) m.outputs.push_back({f.at("path"), f.at("sha256")});
  m.seed = j.at("seed").get<std::uint64_t>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.timestamp = j.at("timestamp").get<std::string>();
  m.deterministic = j.at("deterministic").get<bool>();
  return m;
}

inline std::vector<RunManifest> read_manifest(const std::string& dir) {
  const auto path = (std::filesystem::path(dir) / "manifest.json").string();
  std::vector<RunManifest> out;
  if (!std::filesystem::exists(path)) return out;
  try {
    const auto j = nlohmann::ordered_json::parse(read_file(path));
    for (const auto& e : j.at("entries")) out.push_back(manifest_from_json(e));
  } catch (const std::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return out;
}

/// Adds `m` to the directory's manifest, replacing an earlier entry of the same command.
inline void write_manifest(const std::string& dir, const RunManifest& m) {
  auto entries = read_manifest(dir);
  std::erase_if(entries, [&](const RunManifest& e) { return e.command == m.command; });
  entries.push_back(m);
  nlohmann::ordered_json j;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) j["entries"].push_back(manifest_to_json(e));
  write_file((std::filesystem::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

/// Rehashes every recorded output (and every input still present); returns the paths
/// whose content no longer matches.
inline std::vector<std::string> verify_manifest(const std::string& dir) {
  std::vector<std::string> bad;
  for (const auto& m : read_manifest(dir)) {
    if (sha256_hex(m.config) != m.config_hash) bad.push_back(m.command + ": config");
    for (const auto& f : m.outputs) {
      const auto p = (std::filesystem::path(dir) / f.path).string();
      if (!std::filesystem::exists(p) || sha256_file(p) != f.sha256) bad.push_back(f.path);
    }
    for (const auto& f : m.inputs)
      if (std::filesystem::exists(f.path) && sha256_file(f.path) != f.sha256) bad.push_back(f.path);
  }
  return bad;
}

}  // namespace mrgnf::io
