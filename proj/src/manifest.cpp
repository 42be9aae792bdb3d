#include <gradflow/manifest.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>

#ifndef GRADFLOW_BUILD_ID
#define GRADFLOW_BUILD_ID "dev"
#endif

namespace gradflow {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fileHash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string hashHex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string nowIso() {
  const auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunManifest::RunManifest(std::string command, std::string config_json,
                         std::uint64_t seed)
    : command_(std::move(command)),
      config_json_(std::move(config_json)),
      seed_(seed),
      started_(nowIso()) {}

void RunManifest::addOutput(const std::filesystem::path& path) {
  outputs_.push_back(Output{path.filename().string(),
                            std::filesystem::file_size(path),
                            hashHex(fileHash(path))});
}

void RunManifest::setStatus(const std::string& status,
                            const std::string& detail) {
  status_ = status;
  detail_ = detail;
}

void RunManifest::setTiming(double wall_seconds) {
  wall_seconds_ = wall_seconds;
}

void RunManifest::writeAtomic(const std::filesystem::path& run_dir) const {
  nlohmann::json j;
  j["command"] = command_;
  j["config"] = nlohmann::json::parse(config_json_);
  j["seed"] = seed_;
  j["build_id"] = GRADFLOW_BUILD_ID;
  j["started"] = started_;
  j["finished"] = nowIso();
  j["wall_seconds"] = wall_seconds_;
  j["status"] = status_;
  if (!detail_.empty()) j["detail"] = detail_;
  auto& outs = j["outputs"] = nlohmann::json::array();
  for (const auto& o : outputs_)
    outs.push_back({{"file", o.name}, {"bytes", o.bytes}, {"fnv1a64", o.hash}});

  const auto tmp = run_dir / "manifest.json.tmp";
  const auto final_path = run_dir / "manifest.json";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, final_path);
}

}  // namespace gradflow
