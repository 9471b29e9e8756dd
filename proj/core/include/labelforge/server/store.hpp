#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "labelforge/project_state.hpp"

struct sqlite3;

namespace labelforge::server {

struct UserRecord {
  Coder user;
  std::string password_hash;
};

// Embedded SQLite store in <data_dir>/labelforge.db. Each public mutation is
// one transaction.
class Store {
 public:
  explicit Store(const std::filesystem::path& data_dir);
  ~Store();

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  // Throws Error(conflict) if the username is taken.
  Coder create_user(const std::string& username, Role role, const std::string& password_hash);
  std::optional<UserRecord> find_user(const std::string& username);
  std::optional<UserRecord> find_user(CoderId id);

  void put_session(const std::string& token_hash, CoderId user, TimePoint expires_at);
  std::optional<std::pair<CoderId, TimePoint>> find_session(const std::string& token_hash);
  std::size_t purge_sessions(TimePoint now);

  ProjectId allocate_project_id();
  void create_project(const ProjectState& state);
  // Rewrites the dynamic document; appends snapshots and the selection model
  // only when they changed since the last save.
  void save_project(const ProjectState& state);
  std::vector<ProjectState> load_projects();

 private:
  struct Persisted {
    std::size_t snapshots = 0;
    const LinearModel* selection_model = nullptr;
  };

  void exec(const char* sql);
  void write_models(const ProjectState& state, Persisted& persisted);

  sqlite3* db_ = nullptr;
  std::mutex mutex_;
  std::map<ProjectId, Persisted> persisted_;
};

}  // namespace labelforge::server
