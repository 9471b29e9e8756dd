#include "labelforge/server/store.hpp"

#include <sqlite3.h>

#include "labelforge/error.hpp"
#include "labelforge/serialization.hpp"

namespace labelforge::server {
namespace {

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
      throw Error(ErrorCode::internal, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, const std::string& v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind_blob(int i, const std::string& v) {
    check(sqlite3_bind_blob(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind_null(int i) {
    check(sqlite3_bind_null(stmt_, i));
    return *this;
  }

  // true while a row is available
  bool step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    if (rc == SQLITE_CONSTRAINT) throw Error(ErrorCode::conflict, sqlite3_errmsg(db_));
    throw Error(ErrorCode::internal, std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  void reset() {
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
  }

  std::int64_t int_at(int col) const { return sqlite3_column_int64(stmt_, col); }
  bool null_at(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  std::string text_at(int col) const {
    const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt_, col));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
  }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) throw Error(ErrorCode::internal, std::string("sqlite bind: ") + sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { run("BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    run("COMMIT");
    done_ = true;
  }

 private:
  void run(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw Error(ErrorCode::internal, "sqlite: " + msg);
    }
  }
  sqlite3* db_;
  bool done_ = false;
};

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS users (
  id INTEGER PRIMARY KEY,
  username TEXT NOT NULL UNIQUE,
  role TEXT NOT NULL,
  password_hash TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
  token_hash TEXT PRIMARY KEY,
  user_id INTEGER NOT NULL REFERENCES users(id),
  expires_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS projects (
  id INTEGER PRIMARY KEY,
  static_doc TEXT NOT NULL,
  dynamic_doc TEXT NOT NULL,
  codebook BLOB,
  vocabulary TEXT,
  selection_model TEXT
);
CREATE TABLE IF NOT EXISTS records (
  project_id INTEGER NOT NULL REFERENCES projects(id),
  position INTEGER NOT NULL,
  id INTEGER NOT NULL,
  external_id TEXT,
  text TEXT NOT NULL,
  PRIMARY KEY (project_id, position)
);
CREATE TABLE IF NOT EXISTS snapshots (
  project_id INTEGER NOT NULL REFERENCES projects(id),
  seq INTEGER NOT NULL,
  doc TEXT NOT NULL,
  PRIMARY KEY (project_id, seq)
);
)sql";

std::optional<UserRecord> user_from(Statement& st) {
  if (!st.step()) return std::nullopt;
  auto role = parse_role(st.text_at(2));
  return UserRecord{Coder{CoderId{static_cast<std::uint64_t>(st.int_at(0))}, st.text_at(1), role.value_or(Role::coder)},
                    st.text_at(3)};
}

}  // namespace

Store::Store(const std::filesystem::path& data_dir) {
  std::filesystem::create_directories(data_dir);
  const auto path = (data_dir / "labelforge.db").string();
  if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error(ErrorCode::internal, "cannot open store " + path + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=NORMAL");
  exec("PRAGMA foreign_keys=ON");
  exec(kSchema);
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error(ErrorCode::internal, "sqlite: " + msg);
  }
}

Coder Store::create_user(const std::string& username, Role role, const std::string& password_hash) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "INSERT INTO users(username, role, password_hash) VALUES(?, ?, ?)");
  st.bind(1, username).bind(2, std::string(to_string(role))).bind(3, password_hash);
  try {
    st.step();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::conflict) throw Error(ErrorCode::conflict, "username '" + username + "' is taken");
    throw;
  }
  return Coder{CoderId{static_cast<std::uint64_t>(sqlite3_last_insert_rowid(db_))}, username, role};
}

std::optional<UserRecord> Store::find_user(const std::string& username) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT id, username, role, password_hash FROM users WHERE username = ?");
  st.bind(1, username);
  return user_from(st);
}

std::optional<UserRecord> Store::find_user(CoderId id) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT id, username, role, password_hash FROM users WHERE id = ?");
  st.bind(1, static_cast<std::int64_t>(id.value));
  return user_from(st);
}

void Store::put_session(const std::string& token_hash, CoderId user, TimePoint expires_at) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "INSERT OR REPLACE INTO sessions(token_hash, user_id, expires_at) VALUES(?, ?, ?)");
  st.bind(1, token_hash).bind(2, static_cast<std::int64_t>(user.value)).bind(3, expires_at.time_since_epoch().count());
  st.step();
}

std::optional<std::pair<CoderId, TimePoint>> Store::find_session(const std::string& token_hash) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT user_id, expires_at FROM sessions WHERE token_hash = ?");
  st.bind(1, token_hash);
  if (!st.step()) return std::nullopt;
  return std::make_pair(CoderId{static_cast<std::uint64_t>(st.int_at(0))},
                        TimePoint{std::chrono::milliseconds{st.int_at(1)}});
}

std::size_t Store::purge_sessions(TimePoint now) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "DELETE FROM sessions WHERE expires_at < ?");
  st.bind(1, now.time_since_epoch().count());
  st.step();
  return static_cast<std::size_t>(sqlite3_changes(db_));
}

ProjectId Store::allocate_project_id() {
  std::lock_guard lock(mutex_);
  // Reserve the id by inserting a placeholder row that create_project fills.
  Transaction tx(db_);
  Statement st(db_, "INSERT INTO projects(static_doc, dynamic_doc) VALUES('{}', '{}')");
  st.step();
  ProjectId id{static_cast<std::uint64_t>(sqlite3_last_insert_rowid(db_))};
  tx.commit();
  return id;
}

void Store::write_models(const ProjectState& s, Persisted& p) {
  const auto pid = static_cast<std::int64_t>(s.project.id.value);
  if (s.snapshots.size() > p.snapshots) {
    Statement st(db_, "INSERT OR REPLACE INTO snapshots(project_id, seq, doc) VALUES(?, ?, ?)");
    for (std::size_t i = p.snapshots; i < s.snapshots.size(); ++i) {
      st.bind(1, pid).bind(2, static_cast<std::int64_t>(i)).bind(3, snapshot_to_json(s.snapshots[i]).dump());
      st.step();
      st.reset();
    }
  }
  if (s.selection_model.get() != p.selection_model) {
    Statement st(db_, "UPDATE projects SET selection_model = ? WHERE id = ?");
    if (s.selection_model)
      st.bind(1, linear_model_to_json(*s.selection_model).dump());
    else
      st.bind_null(1);
    st.bind(2, pid);
    st.step();
  }
}

void Store::create_project(const ProjectState& s) {
  std::lock_guard lock(mutex_);
  const auto pid = static_cast<std::int64_t>(s.project.id.value);
  Transaction tx(db_);
  {
    Statement st(db_,
                 "INSERT OR REPLACE INTO projects(id, static_doc, dynamic_doc, codebook, vocabulary) "
                 "VALUES(?, ?, ?, ?, ?)");
    st.bind(1, pid).bind(2, project_static_to_json(s).dump()).bind(3, project_dynamic_to_json(s).dump());
    if (s.project.codebook)
      st.bind_blob(4, *s.project.codebook);
    else
      st.bind_null(4);
    if (s.vocabulary)
      st.bind(5, vocabulary_to_json(*s.vocabulary).dump());
    else
      st.bind_null(5);
    st.step();
  }
  {
    Statement st(db_, "INSERT INTO records(project_id, position, id, external_id, text) VALUES(?, ?, ?, ?, ?)");
    for (std::size_t i = 0; i < s.records.size(); ++i) {
      const auto& r = s.records[i];
      st.bind(1, pid).bind(2, static_cast<std::int64_t>(i)).bind(3, static_cast<std::int64_t>(r.id.value));
      if (r.external_id)
        st.bind(4, *r.external_id);
      else
        st.bind_null(4);
      st.bind(5, r.text);
      st.step();
      st.reset();
    }
  }
  Persisted p;
  write_models(s, p);
  tx.commit();
  persisted_[s.project.id] = Persisted{s.snapshots.size(), s.selection_model.get()};
}

void Store::save_project(const ProjectState& s) {
  std::lock_guard lock(mutex_);
  auto& p = persisted_[s.project.id];
  Transaction tx(db_);
  {
    Statement st(db_, "UPDATE projects SET dynamic_doc = ? WHERE id = ?");
    st.bind(1, project_dynamic_to_json(s).dump()).bind(2, static_cast<std::int64_t>(s.project.id.value));
    st.step();
  }
  Persisted next = p;
  write_models(s, next);
  tx.commit();
  p = Persisted{s.snapshots.size(), s.selection_model.get()};
}

std::vector<ProjectState> Store::load_projects() {
  std::lock_guard lock(mutex_);
  std::vector<ProjectState> out;
  Statement projects(db_,
                     "SELECT id, static_doc, dynamic_doc, codebook, vocabulary, selection_model FROM projects "
                     "WHERE static_doc <> '{}' ORDER BY id");
  while (projects.step()) {
    const auto pid = projects.int_at(0);
    auto static_doc = nlohmann::json::parse(projects.text_at(1));
    auto dynamic_doc = nlohmann::json::parse(projects.text_at(2));
    std::optional<std::string> codebook;
    if (!projects.null_at(3)) codebook = projects.text_at(3);
    std::optional<nlohmann::json> vocab, model;
    if (!projects.null_at(4)) vocab = nlohmann::json::parse(projects.text_at(4));
    if (!projects.null_at(5)) model = nlohmann::json::parse(projects.text_at(5));

    std::vector<Record> records;
    Statement rec(db_, "SELECT position, id, external_id, text FROM records WHERE project_id = ? ORDER BY position");
    rec.bind(1, pid);
    while (rec.step()) {
      Record r;
      r.upload_order = static_cast<std::uint64_t>(rec.int_at(0));
      r.id = RecordId{static_cast<std::uint64_t>(rec.int_at(1))};
      if (!rec.null_at(2)) r.external_id = rec.text_at(2);
      r.text = rec.text_at(3);
      records.push_back(std::move(r));
    }

    std::vector<ModelSnapshot> snapshots;
    Statement snap(db_, "SELECT doc FROM snapshots WHERE project_id = ? ORDER BY seq");
    snap.bind(1, pid);
    while (snap.step()) snapshots.push_back(snapshot_from_json(nlohmann::json::parse(snap.text_at(0))));

    auto state = assemble_project_state(static_doc, std::move(records), dynamic_doc, vocab, std::move(snapshots), model);
    state.project.codebook = std::move(codebook);
    persisted_[state.project.id] = Persisted{state.snapshots.size(), state.selection_model.get()};
    out.push_back(std::move(state));
  }
  return out;
}

}  // namespace labelforge::server
