#pragma once

#include <gradflow/types.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gradflow {

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fileHash(const std::filesystem::path& path);
std::string hashHex(std::uint64_t h);

/// Per-run record written next to a command's outputs: config echo, seed,
/// build id, timestamps, and every emitted file with its content hash.
/// Written atomically (temp file + rename) as manifest.json.
class RunManifest {
 public:
  RunManifest(std::string command, std::string config_json,
              std::uint64_t seed);

  void addOutput(const std::filesystem::path& path);
  void setStatus(const std::string& status, const std::string& detail = "");
  void setTiming(double wall_seconds);

  void writeAtomic(const std::filesystem::path& run_dir) const;

 private:
  std::string command_;
  std::string config_json_;
  std::uint64_t seed_;
  std::string started_;
  std::string status_ = "ok";
  std::string detail_;
  double wall_seconds_ = 0.0;
  struct Output {
    std::string name;
    std::uintmax_t bytes;
    std::string hash;
  };
  std::vector<Output> outputs_;
};

}  // namespace gradflow
