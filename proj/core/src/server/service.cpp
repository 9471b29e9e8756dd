#include "labelforge/server/service.hpp"

#include <sodium.h>

#include <algorithm>
#include <cctype>
#include <nlohmann/json.hpp>

#include "httplib.h"
#include "labelforge/csv.hpp"
#include "labelforge/error.hpp"
#include "labelforge/export.hpp"
#include "labelforge/serialization.hpp"

namespace labelforge::server {

using nlohmann::json;

namespace {

constexpr std::string_view kPrefix = "/api/v1";

std::string hex(const unsigned char* data, std::size_t n) {
  std::string out(n * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), data, n);
  out.pop_back();
  return out;
}

std::string random_token(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  randombytes_buf(buf.data(), buf.size());
  return hex(buf.data(), buf.size());
}

std::string token_digest(const std::string& token) {
  unsigned char out[crypto_generichash_BYTES];
  crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(token.data()), token.size(), nullptr, 0);
  return hex(out, sizeof out);
}

std::string hash_password(const std::string& password) {
  char out[crypto_pwhash_STRBYTES];
  if (crypto_pwhash_str(out, password.data(), password.size(), crypto_pwhash_OPSLIMIT_INTERACTIVE,
                        crypto_pwhash_MEMLIMIT_INTERACTIVE) != 0)
    throw Error(ErrorCode::internal, "password hashing failed");
  return out;
}

bool verify_password(const std::string& hash, const std::string& password) {
  return crypto_pwhash_str_verify(hash.c_str(), password.data(), password.size()) == 0;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return 400;
    case ErrorCode::unauthenticated: return 401;
    case ErrorCode::permission_denied: return 403;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::illegal_transition:
    case ErrorCode::precondition_failed: return 409;
    case ErrorCode::payload_too_large: return 413;
    case ErrorCode::internal: return 500;
  }
  return 500;
}

HttpResponse json_response(const json& body, int status = 200) {
  HttpResponse r;
  r.status = status;
  r.body = body.dump();
  return r;
}

HttpResponse error_response(ErrorCode code, const std::string& message, const std::vector<std::string>& details = {}) {
  return json_response(json{{"code", to_string(code)}, {"message", message}, {"details", details}}, http_status(code));
}

HttpResponse attachment(std::string body, std::string content_type, const std::string& filename) {
  HttpResponse r;
  r.body = std::move(body);
  r.content_type = std::move(content_type);
  r.headers["Content-Disposition"] = "attachment; filename=\"" + filename + "\"";
  return r;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    auto j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    if (j > i) out.emplace_back(path.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

json parse_body(const HttpRequest& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::invalid_argument, "malformed JSON body");
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "JSON body must be an object");
  return j;
}

template <class IdT>
IdT id_param(const std::string& text, const char* what) {
  auto id = parse_id<IdT>(text);
  if (!id) throw Error(ErrorCode::not_found, std::string("unknown ") + what + " " + text);
  return *id;
}

template <class IdT>
std::optional<IdT> id_field(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  std::optional<IdT> id;
  if (it->is_string())
    id = parse_id<IdT>(it->get<std::string>());
  else if (it->is_number_unsigned())
    id = IdT{it->get<std::uint64_t>()};
  if (!id || !*id) throw Error(ErrorCode::invalid_argument, std::string("invalid ") + key);
  return id;
}

// label_id, or a label name under "label".
std::optional<LabelId> label_field(const ProjectState& s, const json& body) {
  if (auto id = id_field<LabelId>(body, "label_id")) return id;
  auto it = body.find("label");
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::invalid_argument, "label must be a string");
  const auto* l = s.find_label(it->get<std::string>());
  if (!l) throw Error(ErrorCode::invalid_argument, "unknown label '" + it->get<std::string>() + "'");
  return l->id;
}

std::size_t size_param(const HttpRequest& req, const std::string& key, std::size_t fallback) {
  auto it = req.query.find(key);
  if (it == req.query.end()) return fallback;
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || ptr != it->second.data() + it->second.size())
    throw Error(ErrorCode::invalid_argument, "query parameter " + key + " must be a non-negative integer");
  return v;
}

std::string filename_slug(std::string_view name) {
  std::string out;
  for (unsigned char c : name) {
    if (std::isalnum(c))
      out.push_back(static_cast<char>(std::tolower(c)));
    else if (!out.empty() && out.back() != '_')
      out.push_back('_');
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "project" : out;
}

json coder_json(const Coder& c) {
  return {{"id", to_string(c.id)}, {"username", c.username}, {"role", to_string(c.role)}};
}

json annotation_json(const ProjectState& s, const Annotation& a) {
  const auto* r = s.find_record(a.record_id);
  const auto* l = s.find_label(a.label_id);
  return {{"id", to_string(a.id)},
          {"record_id", to_string(a.record_id)},
          {"text", r ? r->text : std::string()},
          {"label_id", to_string(a.label_id)},
          {"label", l ? l->name : std::string()},
          {"source", to_string(a.source)},
          {"elapsed_ms", a.elapsed_ms},
          {"created_at", format_timestamp(a.created_at)},
          {"superseded", a.superseded}};
}

json labels_json(const ProjectState& s) {
  json out = json::array();
  for (const auto& l : s.labels)
    out.push_back({{"id", to_string(l.id)}, {"name", l.name}, {"description", l.description}});
  return out;
}

json queue_json(const ProjectState& s, const std::vector<QueueItem>& items) {
  json out = json::array();
  for (const auto& q : items) {
    json votes = json::array();
    for (const auto& v : q.votes) {
      const auto* l = s.find_label(v.label);
      votes.push_back({{"coder_id", to_string(v.coder)},
                       {"username", v.username},
                       {"label_id", to_string(v.label)},
                       {"label", l ? l->name : std::string()}});
    }
    json skipped = json::array();
    for (auto c : q.skipped_by) {
      const auto* m = s.find_member(c);
      skipped.push_back({{"coder_id", to_string(c)}, {"username", m ? m->username : std::string()}});
    }
    out.push_back({{"record_id", to_string(q.record)},
                   {"text", q.text},
                   {"status", to_string(q.status)},
                   {"votes", std::move(votes)},
                   {"skipped_by", std::move(skipped)}});
  }
  return out;
}

json box_json(const BoxPlot& b) {
  return {{"count", b.count},   {"min", b.minimum}, {"q1", b.q1},
          {"median", b.median}, {"q3", b.q3},      {"max", b.maximum},
          {"lower_whisker", b.lower_whisker},      {"upper_whisker", b.upper_whisker},
          {"outliers", b.outliers}};
}

json project_json(const ProjectState& s) {
  std::map<std::string, std::size_t> by_status;
  for (const auto& r : s.records) ++by_status[std::string(to_string(r.status))];
  json batches = json::array();
  for (const auto& b : s.batches)
    batches.push_back({{"index", b.index},
                       {"selection_method", to_string(b.selection_method)},
                       {"status", to_string(b.status)},
                       {"size", b.record_ids.size()},
                       {"double_coded", b.double_coded_count}});
  json members = json::array();
  for (const auto& m : s.members) members.push_back(coder_json(m));
  return {{"id", to_string(s.project.id)},
          {"name", s.project.name},
          {"description", s.project.description},
          {"created_at", format_timestamp(s.project.created_at)},
          {"labels", labels_json(s)},
          {"settings", settings_to_json(s.project.settings)},
          {"members", std::move(members)},
          {"has_codebook", s.project.codebook.has_value()},
          {"records", {{"total", s.records.size()}, {"by_status", by_status}}},
          {"batches", std::move(batches)},
          {"snapshots", s.snapshots.size()}};
}

}  // namespace

// ---- worker pool ------------------------------------------------------------

WorkerPool::WorkerPool(int threads) {
  for (int i = 0; i < threads; ++i) {
    threads_.emplace_back([this] {
      for (;;) {
        std::function<void()> task;
        {
          std::unique_lock lock(mutex_);
          cv_.wait(lock, [this] { return stopping_ || !tasks_.empty(); });
          if (tasks_.empty()) return;
          task = std::move(tasks_.front());
          tasks_.pop_front();
        }
        task();
      }
    });
  }
}

WorkerPool::~WorkerPool() { shutdown(); }

void WorkerPool::post(std::function<void()> task) {
  {
    std::lock_guard lock(mutex_);
    if (!stopping_) {
      tasks_.push_back(std::move(task));
      cv_.notify_one();
      return;
    }
  }
  task();
}

void WorkerPool::shutdown() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_)
    if (t.joinable()) t.join();
  threads_.clear();
}

// ---- routing ----------------------------------------------------------------

enum class Scope { none, project, entity };

struct Service::Route {
  RouteInfo info;
  Scope scope;
  HttpResponse (Service::*handler)(Context&);
};

struct Service::Context {
  const HttpRequest& req;
  std::vector<std::string> params;
  std::optional<Coder> user;
  ProjectCoordinator* project = nullptr;
  TimePoint now{};
  std::string last_segment;

  const Coder& coder() const { return *user; }
};

const std::vector<Service::Route>& Service::route_table() {
  using A = Action;
  static const std::vector<Route> table = {
      {{"POST", "/sessions", std::nullopt, true}, Scope::none, &Service::login_route},
      {{"GET", "/healthz", std::nullopt, false}, Scope::none, &Service::health},
      {{"GET", "/projects", A::annotate, false}, Scope::none, &Service::list_projects},
      {{"POST", "/projects", A::edit_settings, true}, Scope::none, &Service::create_project},
      {{"GET", "/projects/{id}", A::annotate, false}, Scope::project, &Service::get_project},
      {{"PATCH", "/projects/{id}/settings", A::edit_settings, true}, Scope::project, &Service::patch_settings},
      {{"POST", "/projects/{id}/coders", A::edit_settings, true}, Scope::project, &Service::add_coder},
      {{"GET", "/projects/{id}/next", A::annotate, true}, Scope::project, &Service::next},
      {{"POST", "/assignments/{id}/label", A::annotate, true}, Scope::entity, &Service::label},
      {{"POST", "/assignments/{id}/skip", A::annotate, true}, Scope::entity, &Service::skip},
      {{"GET", "/projects/{id}/history", A::view_history, false}, Scope::project, &Service::history},
      {{"PATCH", "/annotations/{id}", A::view_history, true}, Scope::entity, &Service::modify_annotation},
      {{"GET", "/projects/{id}/admin/skipped", A::resolve_skips, false}, Scope::project, &Service::skipped_queue},
      {{"GET", "/projects/{id}/admin/disagreements", A::adjudicate_irr, false}, Scope::project,
       &Service::disagreements},
      {{"POST", "/records/{id}/adjudicate", A::resolve_skips, true}, Scope::entity, &Service::adjudicate},
      {{"POST", "/records/{id}/discard", A::discard, true}, Scope::entity, &Service::discard},
      {{"POST", "/records/{id}/admin-label", A::admin_label, true}, Scope::entity, &Service::admin_label},
      {{"GET", "/projects/{id}/metrics/labels", A::view_dashboard, false}, Scope::project, &Service::metrics},
      {{"GET", "/projects/{id}/metrics/timing", A::view_dashboard, false}, Scope::project, &Service::metrics},
      {{"GET", "/projects/{id}/metrics/model", A::view_dashboard, false}, Scope::project, &Service::metrics},
      {{"GET", "/projects/{id}/metrics/irr", A::view_dashboard, false}, Scope::project, &Service::metrics},
      {{"GET", "/projects/{id}/export/data", A::export_data, false}, Scope::project, &Service::export_archive},
      {{"GET", "/projects/{id}/export/model", A::export_data, false}, Scope::project, &Service::export_archive},
      {{"GET", "/projects/{id}/codebook", A::annotate, false}, Scope::project, &Service::codebook},
  };
  return table;
}

const std::vector<RouteInfo>& Service::routes() {
  static const std::vector<RouteInfo> infos = [] {
    std::vector<RouteInfo> out;
    for (const auto& r : route_table()) {
      RouteInfo info = r.info;
      info.pattern = std::string(kPrefix) + info.pattern;
      out.push_back(std::move(info));
    }
    return out;
  }();
  return infos;
}

// ---- lifecycle --------------------------------------------------------------

Service::Service(ServiceConfig config)
    : config_(std::move(config)), workers_(config_.worker_threads), clock_([] { return now_utc(); }) {
  if (auto errors = validate(config_); !errors.empty())
    throw Error(ErrorCode::invalid_argument, "invalid configuration", errors);
  if (sodium_init() < 0) throw Error(ErrorCode::internal, "libsodium initialization failed");
  store_ = std::make_unique<Store>(config_.data_dir);
  for (auto& state : store_->load_projects()) {
    auto& coordinator = register_project(std::move(state));
    // A crash between batch completion and the cycle leaves it pending.
    try {
      coordinator.run_cycle_now(now());
    } catch (const Error&) {
    }
  }
  sweeper_ = std::thread([this] { sweeper_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(sweeper_mutex_);
    stopping_ = true;
  }
  sweeper_cv_.notify_all();
  if (sweeper_.joinable()) sweeper_.join();
  workers_.shutdown();
}

void Service::set_clock(Clock clock) {
  {
    std::lock_guard lock(clock_mutex_);
    clock_ = clock;
  }
  std::shared_lock lock(projects_mutex_);
  for (auto& [id, p] : projects_) p->set_clock(clock);
}

TimePoint Service::now() const {
  std::lock_guard lock(clock_mutex_);
  return clock_();
}

ProjectCoordinator& Service::register_project(ProjectState state) {
  const auto id = state.project.id;
  auto coordinator = std::make_unique<ProjectCoordinator>(std::move(state));
  coordinator->set_commit_hook([this](const ProjectState& s) { store_->save_project(s); });
  coordinator->set_scheduler([this](ProjectCoordinator::Task task) { workers_.post(std::move(task)); });
  coordinator->set_clock([this] { return now(); });
  std::unique_lock lock(projects_mutex_);
  auto& slot = projects_[id];
  slot = std::move(coordinator);
  return *slot;
}

ProjectCoordinator* Service::project(ProjectId id) {
  std::shared_lock lock(projects_mutex_);
  auto it = projects_.find(id);
  return it == projects_.end() ? nullptr : it->second.get();
}

ProjectCoordinator& Service::project_or_throw(ProjectId id) {
  auto* p = project(id);
  if (!p) throw Error(ErrorCode::not_found, "unknown project " + to_string(id));
  return *p;
}

std::size_t Service::sweep_leases() {
  std::vector<ProjectCoordinator*> all;
  {
    std::shared_lock lock(projects_mutex_);
    for (auto& [id, p] : projects_) all.push_back(p.get());
  }
  const auto t = now();
  std::size_t expired = 0;
  for (auto* p : all) {
    bool due = p->read([&](const ProjectState& s) {
      return std::any_of(s.assignments.begin(), s.assignments.end(), [&](const Assignment& a) {
        return a.resolution == AssignmentResolution::pending && a.lease_expires_at <= t;
      });
    });
    if (due) expired += p->expire_leases(t);
  }
  store_->purge_sessions(t);
  return expired;
}

void Service::wait_idle() {
  std::vector<ProjectCoordinator*> all;
  {
    std::shared_lock lock(projects_mutex_);
    for (auto& [id, p] : projects_) all.push_back(p.get());
  }
  for (auto* p : all) p->wait_idle();
}

void Service::sweeper_loop() {
  std::unique_lock lock(sweeper_mutex_);
  while (!stopping_) {
    if (sweeper_cv_.wait_for(lock, std::chrono::seconds(config_.lease_sweep_interval_seconds),
                             [this] { return stopping_; }))
      break;
    lock.unlock();
    try {
      sweep_leases();
    } catch (const std::exception&) {
    }
    lock.lock();
  }
}

// ---- users and sessions -----------------------------------------------------

std::string Service::create_user(const std::string& username, Role role, std::string password) {
  if (username.empty()) throw Error(ErrorCode::invalid_argument, "empty username");
  if (password.empty()) password = random_token(12);
  store_->create_user(username, role, hash_password(password));
  return password;
}

std::string Service::login(const std::string& username, const std::string& password) {
  auto user = store_->find_user(username);
  if (!user || !verify_password(user->password_hash, password))
    throw Error(ErrorCode::unauthenticated, "invalid username or password");
  auto token = random_token(32);
  store_->put_session(token_digest(token), user->user.id, now() + std::chrono::seconds(config_.session_ttl_seconds));
  return token;
}

std::optional<Coder> Service::authenticate(const HttpRequest& req) {
  auto it = req.headers.find("authorization");
  if (it == req.headers.end()) return std::nullopt;
  constexpr std::string_view bearer = "Bearer ";
  if (it->second.compare(0, bearer.size(), bearer) != 0) return std::nullopt;
  auto session = store_->find_session(token_digest(it->second.substr(bearer.size())));
  if (!session || session->second <= now()) return std::nullopt;
  auto user = store_->find_user(session->first);
  if (!user) return std::nullopt;
  return user->user;
}

// ---- dispatch ---------------------------------------------------------------

HttpResponse Service::handle(const HttpRequest& req) {
  try {
    if (req.body.size() > config_.upload_cap_bytes)
      throw Error(ErrorCode::payload_too_large, "request body exceeds " + std::to_string(config_.upload_cap_bytes) + " bytes");
    std::string_view path = req.path;
    if (path.substr(0, kPrefix.size()) != kPrefix) throw Error(ErrorCode::not_found, "no route for " + req.path);
    const auto segments = split_path(path.substr(kPrefix.size()));

    const Route* match = nullptr;
    bool path_matched = false;
    std::vector<std::string> params;
    for (const auto& route : route_table()) {
      const auto pattern = split_path(route.info.pattern);
      if (pattern.size() != segments.size()) continue;
      std::vector<std::string> captured;
      bool ok = true;
      for (std::size_t i = 0; i < pattern.size() && ok; ++i) {
        if (pattern[i] == "{id}")
          captured.push_back(segments[i]);
        else
          ok = pattern[i] == segments[i];
      }
      if (!ok) continue;
      path_matched = true;
      if (route.info.method == req.method) {
        match = &route;
        params = std::move(captured);
        break;
      }
    }
    if (!match) {
      if (path_matched) {
        auto r = error_response(ErrorCode::invalid_argument, "method " + req.method + " not allowed on " + req.path);
        r.status = 405;
        return r;
      }
      throw Error(ErrorCode::not_found, "no route for " + req.path);
    }

    Context ctx{req, std::move(params), std::nullopt, nullptr, now(), segments.back()};
    if (match->info.action) {
      ctx.user = authenticate(req);
      if (!ctx.user) throw Error(ErrorCode::unauthenticated, "missing, invalid or expired session token");
      if (!check_permission(ctx.user->role, *match->info.action))
        throw Error(ErrorCode::permission_denied, "role " + std::string(to_string(ctx.user->role)) + " may not " +
                                                      std::string(to_string(*match->info.action)));
    }
    if (match->scope != Scope::none) {
      ProjectId pid = match->scope == Scope::project ? id_param<ProjectId>(ctx.params[0], "project")
                                                     : project_of(id_param<RecordId>(ctx.params[0], "id").value);
      ctx.project = &project_or_throw(pid);
      const bool member = ctx.project->read([&](const ProjectState& s) { return s.is_member(ctx.user->id); });
      if (!member) {
        if (ctx.user->role != Role::admin)
          throw Error(ErrorCode::permission_denied, "not a member of project " + to_string(pid));
        // Admins may manage every project.
        ctx.project->add_member(*ctx.user);
      }
    }
    return (this->*(match->handler))(ctx);
  } catch (const Error& e) {
    return error_response(e.code(), e.what(), e.details());
  } catch (const json::exception& e) {
    return error_response(ErrorCode::invalid_argument, e.what());
  } catch (const std::exception& e) {
    return error_response(ErrorCode::internal, e.what());
  }
}

// ---- handlers ---------------------------------------------------------------

HttpResponse Service::login_route(Context& ctx) {
  auto body = parse_body(ctx.req);
  auto token = login(body.value("username", std::string()), body.value("password", std::string()));
  auto user = store_->find_user(body.value("username", std::string()));
  return json_response({{"token", token},
                        {"user", coder_json(user->user)},
                        {"expires_in", config_.session_ttl_seconds}},
                       201);
}

HttpResponse Service::health(Context&) {
  return json_response({{"status", "ok"}, {"version", LABELFORGE_VERSION}});
}

HttpResponse Service::list_projects(Context& ctx) {
  std::vector<ProjectCoordinator*> all;
  {
    std::shared_lock lock(projects_mutex_);
    for (auto& [id, p] : projects_) all.push_back(p.get());
  }
  json out = json::array();
  for (auto* p : all) {
    p->read([&](const ProjectState& s) {
      if (ctx.coder().role == Role::admin || s.is_member(ctx.coder().id))
        out.push_back({{"id", to_string(s.project.id)}, {"name", s.project.name}, {"records", s.records.size()}});
      return 0;
    });
  }
  return json_response({{"projects", std::move(out)}});
}

HttpResponse Service::create_project(Context& ctx) {
  const auto& files = ctx.req.files;
  auto meta_it = files.find("metadata");
  if (meta_it == files.end()) throw Error(ErrorCode::invalid_argument, "missing metadata part");
  auto data_it = files.find("data");
  if (data_it == files.end()) throw Error(ErrorCode::invalid_argument, "missing data part");

  json meta = json::parse(meta_it->second.content, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw Error(ErrorCode::invalid_argument, "metadata is not a JSON object");
  const auto name = meta.value("name", std::string());
  const auto description = meta.value("description", std::string());
  std::vector<LabelSpec> labels;
  for (const auto& l : meta.value("labels", json::array())) {
    if (l.is_string())
      labels.push_back({l.get<std::string>(), ""});
    else
      labels.push_back({l.at("name").get<std::string>(), l.value("description", std::string())});
  }
  ProjectSettings settings = settings_from_json(meta.value("settings", json::object()));

  std::vector<std::string> label_names;
  for (const auto& l : labels) label_names.push_back(l.name);
  auto upload = parse_upload(data_it->second.content, label_names);
  if (auto errors = validate_project_config(name, labels, settings, upload.rows); !errors.empty())
    throw Error(ErrorCode::invalid_argument, "invalid project", errors);

  std::optional<std::string> codebook;
  if (auto it = files.find("codebook"); it != files.end() && !it->second.content.empty())
    codebook = it->second.content;

  const auto id = store_->allocate_project_id();
  auto state = create_project_state(id, name, description, labels, settings, upload.rows, ctx.coder(), ctx.now,
                                    std::move(codebook));
  store_->create_project(state);
  auto& coordinator = register_project(std::move(state));
  coordinator.run_cycle_now(ctx.now);

  json issues = json::array();
  for (const auto& i : upload.issues) issues.push_back({{"line", i.line}, {"kind", i.kind}, {"message", i.message}});
  json batch = nullptr;
  coordinator.read([&](const ProjectState& s) {
    if (const auto* b = s.current_batch())
      batch = {{"index", b->index}, {"selection_method", to_string(b->selection_method)}, {"size", b->record_ids.size()}};
    return 0;
  });
  return json_response({{"id", to_string(id)},
                        {"batch", std::move(batch)},
                        {"ingest", {{"accepted", upload.rows.size()}, {"excluded", std::move(issues)}}}},
                       201);
}

HttpResponse Service::get_project(Context& ctx) {
  return json_response(ctx.project->read([](const ProjectState& s) { return project_json(s); }));
}

HttpResponse Service::patch_settings(Context& ctx) {
  auto body = parse_body(ctx.req);
  SettingsPatch patch;
  for (const auto& [key, value] : body.items()) {
    if (key == "lease_ttl_seconds")
      patch.lease_ttl_seconds = value.get<int>();
    else if (key == "irr_overlap_percent")
      patch.irr_overlap_percent = value.get<int>();
    else if (key == "batch_size")
      patch.batch_size = value.get<int>();
    else if (key == "al_method") {
      auto m = parse_al_method(value.get<std::string>());
      if (!m) throw Error(ErrorCode::invalid_argument, "unknown al_method '" + value.get<std::string>() + "'");
      patch.al_method = m;
    } else
      throw Error(ErrorCode::invalid_argument, "setting '" + key + "' is not mutable");
  }
  ctx.project->update_settings(ctx.coder(), patch);
  return json_response(ctx.project->read([](const ProjectState& s) { return settings_to_json(s.project.settings); }));
}

HttpResponse Service::add_coder(Context& ctx) {
  auto body = parse_body(ctx.req);
  const auto username = body.value("username", std::string());
  if (username.empty()) throw Error(ErrorCode::invalid_argument, "empty username");
  json out;
  auto existing = store_->find_user(username);
  if (!existing) {
    auto role = parse_role(body.value("role", std::string("coder")));
    if (!role) throw Error(ErrorCode::invalid_argument, "unknown role");
    auto password = create_user(username, *role, body.value("password", std::string()));
    existing = store_->find_user(username);
    if (!body.contains("password")) out["password"] = password;
  }
  ctx.project->add_member(existing->user);
  out["user"] = coder_json(existing->user);
  return json_response(out, 201);
}

HttpResponse Service::next(Context& ctx) {
  auto served = ctx.project->next_assignment(ctx.coder(), ctx.now);
  if (!served) return json_response({{"empty", true}});
  return ctx.project->read([&](const ProjectState& s) {
    json j = {{"empty", false},
              {"assignment_id", to_string(served->assignment.id)},
              {"record_id", to_string(served->record_id)},
              {"text", served->text},
              {"double_coded", served->double_coded},
              {"lease_expires_at", format_timestamp(served->assignment.lease_expires_at)},
              {"labels", labels_json(s)},
              {"codebook_url", s.project.codebook ? json(std::string(kPrefix) + "/projects/" +
                                                         to_string(s.project.id) + "/codebook")
                                                  : json(nullptr)}};
    return json_response(j);
  });
}

HttpResponse Service::label(Context& ctx) {
  auto body = parse_body(ctx.req);
  auto assignment = id_param<AssignmentId>(ctx.params[0], "assignment");
  auto label = ctx.project->read([&](const ProjectState& s) { return label_field(s, body); });
  if (!label) throw Error(ErrorCode::invalid_argument, "missing label_id");
  auto result = ctx.project->submit_label(ctx.coder(), assignment, *label, ctx.now);
  return json_response({{"outcome", to_string(result.outcome)},
                        {"annotation_id", to_string(result.annotation)},
                        {"record_status", to_string(result.record_status)}});
}

HttpResponse Service::skip(Context& ctx) {
  ctx.project->skip(ctx.coder(), id_param<AssignmentId>(ctx.params[0], "assignment"), ctx.now);
  return json_response({{"skipped", true}});
}

HttpResponse Service::history(Context& ctx) {
  const auto page = size_param(ctx.req, "page", 0);
  const auto page_size = std::min<std::size_t>(size_param(ctx.req, "page_size", 50), 500);
  return ctx.project->read([&](const ProjectState& s) {
    auto h = workflow::history(s, ctx.coder(), page, page_size);
    json items = json::array();
    for (const auto& a : h.items) items.push_back(annotation_json(s, a));
    return json_response({{"total", h.total}, {"page", page}, {"page_size", page_size}, {"items", std::move(items)}});
  });
}

HttpResponse Service::modify_annotation(Context& ctx) {
  auto body = parse_body(ctx.req);
  auto id = id_param<AnnotationId>(ctx.params[0], "annotation");
  auto label = ctx.project->read([&](const ProjectState& s) { return label_field(s, body); });
  if (!label) throw Error(ErrorCode::invalid_argument, "missing label_id");
  auto updated = ctx.project->modify_annotation(ctx.coder(), id, *label, ctx.now);
  return ctx.project->read([&](const ProjectState& s) {
    return json_response({{"annotation", annotation_json(s, updated)}, {"superseded", to_string(id)}});
  });
}

HttpResponse Service::skipped_queue(Context& ctx) {
  return ctx.project->read(
      [](const ProjectState& s) { return json_response({{"items", queue_json(s, workflow::skipped_queue(s))}}); });
}

HttpResponse Service::disagreements(Context& ctx) {
  return ctx.project->read(
      [](const ProjectState& s) { return json_response({{"items", queue_json(s, workflow::disagreements(s))}}); });
}

HttpResponse Service::adjudicate(Context& ctx) {
  auto body = parse_body(ctx.req);
  auto record = id_param<RecordId>(ctx.params[0], "record");
  Adjudication decision;
  decision.label = ctx.project->read([&](const ProjectState& s) { return label_field(s, body); });
  if (!decision.label && !body.value("discard", false))
    throw Error(ErrorCode::invalid_argument, "adjudication needs label_id or discard=true");
  ctx.project->adjudicate(ctx.coder(), record, decision, ctx.now);
  return ctx.project->read([&](const ProjectState& s) {
    return json_response({{"record_id", to_string(record)}, {"status", to_string(s.find_record(record)->status)}});
  });
}

HttpResponse Service::discard(Context& ctx) {
  auto record = id_param<RecordId>(ctx.params[0], "record");
  ctx.project->discard(ctx.coder(), record, ctx.now);
  return json_response({{"record_id", to_string(record)}, {"status", "discarded"}});
}

HttpResponse Service::admin_label(Context& ctx) {
  auto body = parse_body(ctx.req);
  auto record = id_param<RecordId>(ctx.params[0], "record");
  auto label = ctx.project->read([&](const ProjectState& s) { return label_field(s, body); });
  if (!label) throw Error(ErrorCode::invalid_argument, "missing label_id");
  auto annotation = ctx.project->admin_label(ctx.coder(), record, *label, ctx.now);
  return json_response({{"record_id", to_string(record)}, {"annotation_id", to_string(annotation)}, {"status", "labeled"}});
}

HttpResponse Service::metrics(Context& ctx) {
  const auto& kind = ctx.last_segment;
  return ctx.project->read([&](const ProjectState& s) {
    if (kind == "labels") {
      json names = json::array();
      for (const auto& l : s.labels) names.push_back(l.name);
      json coders = json::array();
      for (const auto& [username, counts] : workflow::label_distribution(s)) {
        json c = json::object();
        for (const auto& l : s.labels) {
          auto it = counts.find(l.name);
          c[l.name] = it == counts.end() ? 0 : it->second;
        }
        coders.push_back({{"username", username}, {"counts", std::move(c)}});
      }
      return json_response({{"labels", std::move(names)}, {"coders", std::move(coders)}});
    }
    if (kind == "timing") {
      json coders = json::array();
      for (const auto& t : workflow::timing_stats(s))
        coders.push_back({{"coder_id", to_string(t.coder)}, {"username", t.username}, {"elapsed_ms", box_json(t.elapsed_ms)}});
      return json_response({{"coders", std::move(coders)}});
    }
    if (kind == "model") {
      json series = json::array();
      for (const auto& snap : s.snapshots) {
        json m = metrics_to_json(snap.metrics);
        m["batch_index"] = snap.batch_index;
        m["training_size"] = snap.training_size;
        m["trained_at"] = format_timestamp(snap.trained_at);
        series.push_back(std::move(m));
      }
      return json_response({{"enabled", s.project.settings.al_enabled}, {"series", std::move(series)}});
    }
    auto irr = irr_summary(s);
    if (!irr.enabled) return json_response({{"enabled", false}});
    json pairs = json::array();
    for (const auto& p : irr.pairs)
      pairs.push_back({{"first", p.first_username},
                       {"second", p.second_username},
                       {"shared_items", p.shared_items},
                       {"agreement", p.agreement}});
    json matrix = json::array();
    for (std::size_t r = 0; r < irr.matrix.categories; ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < irr.matrix.categories; ++c) row.push_back(irr.matrix.at(r, c));
      matrix.push_back(std::move(row));
    }
    return json_response({{"enabled", true},
                          {"statistic", irr.statistic.empty() ? json(nullptr) : json(irr.statistic)},
                          {"kappa", irr.kappa ? json(*irr.kappa) : json(nullptr)},
                          {"percent_agreement", irr.percent_overall ? json(*irr.percent_overall) : json(nullptr)},
                          {"items", irr.items},
                          {"pairs", std::move(pairs)},
                          {"matrix", std::move(matrix)},
                          {"labels", irr.label_names}});
  });
}

HttpResponse Service::export_archive(Context& ctx) {
  const bool model = ctx.last_segment == "model";
  auto [bytes, name] = ctx.project->read([&](const ProjectState& s) {
    auto slug = filename_slug(s.project.name);
    if (model) return std::make_pair(export_model_bundle(s), slug + "_model.zip");
    return std::make_pair(export_labeled_zip(s), slug + "_labeled_data.zip");
  });
  return attachment(std::move(bytes), "application/zip", name);
}

HttpResponse Service::codebook(Context& ctx) {
  auto [bytes, name] = ctx.project->read([](const ProjectState& s) {
    if (!s.project.codebook) throw Error(ErrorCode::not_found, "project has no codebook");
    return std::make_pair(*s.project.codebook, filename_slug(s.project.name) + "_codebook.pdf");
  });
  auto r = attachment(std::move(bytes), "application/pdf", name);
  r.headers["Content-Disposition"] = "inline; filename=\"" + name + "\"";
  return r;
}

// ---- httplib adapter --------------------------------------------------------

struct Service::HttpServer {
  httplib::Server server;
};

namespace {

HttpRequest convert(const httplib::Request& in) {
  HttpRequest out;
  out.method = in.method;
  out.path = in.path;
  for (const auto& [k, v] : in.params) out.query.emplace(k, v);
  for (const auto& [k, v] : in.headers) {
    std::string key = k;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    out.headers.emplace(std::move(key), v);
  }
  out.body = in.body;
  for (const auto& [k, f] : in.files) out.files.emplace(k, FilePart{f.filename, f.content_type, f.content});
  return out;
}

}  // namespace

static void install_routes(httplib::Server& server, Service& service) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    auto out = service.handle(convert(req));
    res.status = out.status;
    for (const auto& [k, v] : out.headers) res.set_header(k, v);
    res.set_content(std::move(out.body), out.content_type);
  };
  server.Get(R"(/.*)", handler);
  server.Post(R"(/.*)", handler);
  server.Patch(R"(/.*)", handler);
  server.Put(R"(/.*)", handler);
  server.Delete(R"(/.*)", handler);
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    ErrorCode code = res.status == 413 ? ErrorCode::payload_too_large
                     : res.status == 404 ? ErrorCode::not_found
                     : res.status >= 500 ? ErrorCode::internal
                                         : ErrorCode::invalid_argument;
    auto out = error_response(code, httplib::status_message(res.status));
    res.set_content(out.body, out.content_type);
  });
}

bool Service::listen() {
  http_ = std::make_unique<HttpServer>();
  http_->server.set_payload_max_length(config_.upload_cap_bytes);
  install_routes(http_->server, *this);
  return http_->server.listen(config_.host, config_.port);
}

int Service::listen_in_background() {
  http_ = std::make_unique<HttpServer>();
  http_->server.set_payload_max_length(config_.upload_cap_bytes);
  install_routes(http_->server, *this);
  const int port = http_->server.bind_to_any_port(config_.host);
  if (port < 0) throw Error(ErrorCode::internal, "cannot bind to " + config_.host);
  http_thread_ = std::thread([this] { http_->server.listen_after_bind(); });
  http_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  if (http_) http_->server.stop();
  if (http_thread_.joinable()) http_thread_.join();
}

}  // namespace labelforge::server
