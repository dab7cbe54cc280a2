#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace franson {

inline constexpr const char* kToolVersion = "franson 1.0.0";

struct FileRecord {
  std::string path;  // relative to the run directory
  std::string digest;
};

struct StageRecord {
  std::string name;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  double wall_ms = 0;
};

// Reproducibility sidecar written to <run dir>/manifest.json. The scenario
// snapshot plus the seed pin everything a rerun needs; stage digests let
// the rerun (or a reviewer) check that it really produced the same bytes.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  std::string scenario;  // canonical config snapshot, parseable as-is
  std::vector<StageRecord> stages;

  bool has_stage(const std::string& name) const;
  const StageRecord* find_stage(const std::string& name) const;
};

// FNV-1a over the raw bytes, as 16 hex digits.
std::string fnv1a_hex(const void* data, std::size_t len);
std::string digest_file(const std::string& path);  // data_error on IO failure

void save_manifest(const std::string& path, const RunManifest& m);
RunManifest load_manifest(const std::string& path);  // data_error

}  // namespace franson
