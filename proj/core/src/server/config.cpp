#include "labelforge/server/config.hpp"

#include <charconv>
#include <limits>
#include <string_view>

namespace labelforge::server {
namespace {

template <class T>
bool parse_number(std::string_view text, T& out) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return false;
  out = v;
  return true;
}

}  // namespace

std::vector<std::string> validate(const ServiceConfig& c) {
  std::vector<std::string> errors;
  if (c.host.empty()) errors.emplace_back("host must not be empty");
  if (c.data_dir.empty()) errors.emplace_back("data directory must not be empty");
  if (c.session_ttl_seconds < 1) errors.emplace_back("session TTL must be positive");
  if (c.upload_cap_bytes < 1) errors.emplace_back("upload cap must be positive");
  if (c.lease_sweep_interval_seconds < 1) errors.emplace_back("lease sweep interval must be positive");
  if (c.worker_threads < 1) errors.emplace_back("worker thread count must be positive");
  return errors;
}

std::vector<std::string> apply_env_overrides(ServiceConfig& c, const EnvLookup& getenv) {
  std::vector<std::string> errors;
  auto number = [&](const char* name, auto& target) {
    const char* v = getenv(name);
    if (!v) return;
    if (!parse_number(std::string_view(v), target)) errors.push_back(std::string(name) + ": not a valid number");
  };
  if (const char* v = getenv("LABELFORGE_HOST")) c.host = v;
  if (const char* v = getenv("LABELFORGE_DATA_DIR")) c.data_dir = v;
  number("LABELFORGE_PORT", c.port);
  number("LABELFORGE_SESSION_TTL", c.session_ttl_seconds);
  number("LABELFORGE_UPLOAD_CAP_BYTES", c.upload_cap_bytes);
  number("LABELFORGE_SWEEP_INTERVAL", c.lease_sweep_interval_seconds);
  number("LABELFORGE_WORKER_THREADS", c.worker_threads);
  return errors;
}

}  // namespace labelforge::server
