#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "labelforge/server/service.hpp"

namespace lftest {

using nlohmann::json;
namespace srv = labelforge::server;

// Fresh data directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("labelforge_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct Reply {
  int status = 0;
  json body;
  std::string raw;
  std::map<std::string, std::string> headers;
};

// Drives Service::handle in-process.
class ApiClient {
 public:
  explicit ApiClient(srv::Service& service, std::string token = {}) : service_(service), token_(std::move(token)) {}

  ApiClient as(const std::string& token) const { return ApiClient(service_, token); }

  Reply call(const std::string& method, const std::string& path, const json& body = nullptr,
             std::map<std::string, std::string> query = {}) const {
    srv::HttpRequest req;
    req.method = method;
    req.path = "/api/v1" + path;
    req.query = std::move(query);
    if (!token_.empty()) req.headers["authorization"] = "Bearer " + token_;
    if (!body.is_null()) req.body = body.dump();
    return finish(req);
  }

  Reply get(const std::string& path, std::map<std::string, std::string> query = {}) const {
    return call("GET", path, nullptr, std::move(query));
  }
  Reply post(const std::string& path, const json& body = json::object()) const { return call("POST", path, body); }
  Reply patch(const std::string& path, const json& body) const { return call("PATCH", path, body); }

  Reply create_project(const json& metadata, const std::string& csv, const std::string& codebook = {}) const {
    srv::HttpRequest req;
    req.method = "POST";
    req.path = "/api/v1/projects";
    if (!token_.empty()) req.headers["authorization"] = "Bearer " + token_;
    req.files["metadata"] = {"", "application/json", metadata.dump()};
    req.files["data"] = {"data.csv", "text/csv", csv};
    if (!codebook.empty()) req.files["codebook"] = {"codebook.pdf", "application/pdf", codebook};
    return finish(req);
  }

 private:
  Reply finish(const srv::HttpRequest& req) const {
    auto res = service_.handle(req);
    Reply out{res.status, nullptr, res.body, res.headers};
    if (res.content_type == "application/json") out.body = json::parse(res.body);
    return out;
  }

  srv::Service& service_;
  std::string token_;
};

}  // namespace lftest
