#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace labelforge::server {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  std::uint16_t port = 8080;
  std::filesystem::path data_dir = "data";
  int session_ttl_seconds = 12 * 3600;
  std::size_t upload_cap_bytes = 100u * 1024u * 1024u;
  int lease_sweep_interval_seconds = 60;
  int worker_threads = 2;
};

// Problems with the configuration; empty when it is usable.
std::vector<std::string> validate(const ServiceConfig& config);

using EnvLookup = std::function<const char*(const char*)>;

// LABELFORGE_HOST, LABELFORGE_PORT, LABELFORGE_DATA_DIR, LABELFORGE_SESSION_TTL,
// LABELFORGE_UPLOAD_CAP_BYTES, LABELFORGE_SWEEP_INTERVAL and
// LABELFORGE_WORKER_THREADS take precedence over command-line values.
// Unparseable numbers are reported, not silently ignored.
std::vector<std::string> apply_env_overrides(ServiceConfig& config, const EnvLookup& getenv);

}  // namespace labelforge::server
