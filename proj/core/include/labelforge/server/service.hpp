#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "labelforge/coordinator.hpp"
#include "labelforge/server/config.hpp"
#include "labelforge/server/http.hpp"
#include "labelforge/server/store.hpp"

namespace labelforge::server {

struct RouteInfo {
  std::string method;
  std::string pattern;  // "{id}" marks a path parameter
  // nullopt only for public routes (login, health check).
  std::optional<Action> action;
  bool mutating = false;
};

// Fixed-size pool running retrain cycles off the request threads.
class WorkerPool {
 public:
  explicit WorkerPool(int threads);
  ~WorkerPool();
  void post(std::function<void()> task);
  void shutdown();  // drains queued tasks, then joins

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> tasks_;
  std::vector<std::thread> threads_;
  bool stopping_ = false;
};

class Service {
 public:
  using Clock = std::function<TimePoint()>;

  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  static const std::vector<RouteInfo>& routes();

  HttpResponse handle(const HttpRequest& request);

  // Blocks until stop(). Returns false if the port could not be bound.
  bool listen();
  // Binds to an ephemeral port on host and serves on a background thread.
  int listen_in_background();
  void stop();

  // Throws Error(conflict) if the username exists. An empty password
  // generates one; the password in effect is returned.
  std::string create_user(const std::string& username, Role role, std::string password = {});
  // Throws Error(unauthenticated) on bad credentials.
  std::string login(const std::string& username, const std::string& password);

  void set_clock(Clock clock);
  TimePoint now() const;

  std::size_t sweep_leases();
  // Blocks until no retrain cycle is pending on any project.
  void wait_idle();

  ProjectCoordinator* project(ProjectId id);
  const ServiceConfig& config() const { return config_; }

 private:
  struct Route;
  struct Context;
  struct HttpServer;

  ProjectCoordinator& register_project(ProjectState state);
  std::optional<Coder> authenticate(const HttpRequest& request);
  ProjectCoordinator& project_or_throw(ProjectId id);
  void sweeper_loop();

  // handlers
  HttpResponse login_route(Context&);
  HttpResponse health(Context&);
  HttpResponse list_projects(Context&);
  HttpResponse create_project(Context&);
  HttpResponse get_project(Context&);
  HttpResponse patch_settings(Context&);
  HttpResponse add_coder(Context&);
  HttpResponse next(Context&);
  HttpResponse label(Context&);
  HttpResponse skip(Context&);
  HttpResponse history(Context&);
  HttpResponse modify_annotation(Context&);
  HttpResponse skipped_queue(Context&);
  HttpResponse disagreements(Context&);
  HttpResponse adjudicate(Context&);
  HttpResponse discard(Context&);
  HttpResponse admin_label(Context&);
  HttpResponse metrics(Context&);
  HttpResponse export_archive(Context&);
  HttpResponse codebook(Context&);

  static const std::vector<Route>& route_table();

  ServiceConfig config_;
  std::unique_ptr<Store> store_;
  WorkerPool workers_;

  mutable std::shared_mutex projects_mutex_;
  std::map<ProjectId, std::unique_ptr<ProjectCoordinator>> projects_;

  mutable std::mutex clock_mutex_;
  Clock clock_;

  std::mutex sweeper_mutex_;
  std::condition_variable sweeper_cv_;
  bool stopping_ = false;
  std::thread sweeper_;

  std::unique_ptr<HttpServer> http_;
  std::thread http_thread_;
};

}  // namespace labelforge::server
