#include <csignal>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "labelforge/error.hpp"
#include "labelforge/server/service.hpp"

namespace lf = labelforge;
namespace srv = labelforge::server;

namespace {

srv::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

// Applies LABELFORGE_* overrides and validates; prints problems and returns
// false when the process should exit nonzero.
bool finalize(srv::ServiceConfig& config) {
  auto errors = srv::apply_env_overrides(config, [](const char* name) { return std::getenv(name); });
  for (const auto& e : srv::validate(config)) errors.push_back(e);
  for (const auto& e : errors) std::cerr << "config: " << e << "\n";
  return errors.empty();
}

void print_error(const lf::Error& e) {
  std::cerr << "error: " << e.what() << "\n";
  for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labelforge annotation server"};
  app.require_subcommand(1);

  srv::ServiceConfig config;

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--port", config.port, "Listen port")->capture_default_str();
  serve->add_option("--host", config.host, "Listen address")->capture_default_str();
  serve->add_option("--data-dir", config.data_dir, "Data directory")->capture_default_str();
  serve->add_option("--session-ttl", config.session_ttl_seconds, "Session lifetime in seconds")->capture_default_str();
  serve->add_option("--upload-cap", config.upload_cap_bytes, "Maximum request body in bytes")->capture_default_str();
  serve->add_option("--sweep-interval", config.lease_sweep_interval_seconds, "Lease sweep interval in seconds")
      ->capture_default_str();
  serve->add_option("--workers", config.worker_threads, "Retrain worker threads")->capture_default_str();

  std::string username, password;
  auto* admin = app.add_subcommand("create-admin", "Create an admin account");
  admin->add_option("--username", username, "Account name")->required();
  admin->add_option("--password", password, "Password (generated when omitted)");
  admin->add_option("--data-dir", config.data_dir, "Data directory")->capture_default_str();

  app.add_subcommand("version", "Print the version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("version")) {
      std::cout << "labelforge " << LABELFORGE_VERSION << "\n";
      return 0;
    }
    if (!finalize(config)) return 2;

    if (app.got_subcommand("create-admin")) {
      srv::Service service(config);
      const bool generated = password.empty();
      auto effective = service.create_user(username, lf::Role::admin, password);
      std::cout << "created admin " << username << "\n";
      if (generated) std::cout << "password: " << effective << "\n";
      return 0;
    }

    srv::Service service(config);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << config.host << ":" << config.port << " (data " << config.data_dir.string()
              << ")\n";
    const bool ok = service.listen();
    g_service = nullptr;
    if (!ok) {
      std::cerr << "error: cannot listen on " << config.host << ":" << config.port << "\n";
      return 1;
    }
    return 0;
  } catch (const lf::Error& e) {
    print_error(e);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
