#include <set>

#include "api_client.hpp"
#include "doctest.h"
#include "httplib.h"
#include "labelforge/csv.hpp"
#include "labelforge/zip.hpp"

using namespace lftest;
using labelforge::TimePoint;
using namespace std::chrono_literals;

namespace {

srv::ServiceConfig test_config(const TempDir& dir) {
  srv::ServiceConfig c;
  c.host = "127.0.0.1";
  c.data_dir = dir.path();
  c.lease_sweep_interval_seconds = 3600;
  c.upload_cap_bytes = 1 << 20;
  return c;
}

std::string corpus_csv(int n, int pre_labeled = 0) {
  std::string csv = "ID,Text,Label\n";
  for (int i = 0; i < n; ++i) {
    bool pos = i % 2 == 1;
    csv += "r" + std::to_string(i) + "," + (pos ? "bright sunny happy day " : "dark rainy gloomy night ") +
           std::to_string(i) + ",";
    if (i < pre_labeled) csv += pos ? "pos" : "neg";
    csv += "\n";
  }
  return csv;
}

json metadata(int batch_size = 5, json extra = json::object()) {
  json settings = {{"batch_size", batch_size}};
  for (auto& [k, v] : extra.items()) settings[k] = v;
  return {{"name", "Weather"}, {"description", "demo"}, {"labels", {"neg", "pos"}}, {"settings", settings}};
}

struct Env {
  TempDir dir;
  std::unique_ptr<srv::Service> service;
  std::string admin_token;
  TimePoint clock = TimePoint{std::chrono::milliseconds{1'800'000'000'000}};

  Env() { start(); }

  void start() {
    service = std::make_unique<srv::Service>(test_config(dir));
    service->set_clock([this] { return clock; });
  }

  void bootstrap_admin() {
    service->create_user("root", labelforge::Role::admin, "secret");
    admin_token = service->login("root", "secret");
  }

  ApiClient admin() { return ApiClient(*service, admin_token); }
  ApiClient anon() { return ApiClient(*service); }

  std::string coder_token(const std::string& project, const std::string& name) {
    auto r = admin().post("/projects/" + project + "/coders", {{"username", name}, {"password", "pw-" + name}});
    REQUIRE(r.status == 201);
    return service->login(name, "pw-" + name);
  }

  std::string create(int records = 20, int pre = 0, int batch = 5, json extra = json::object()) {
    auto r = admin().create_project(metadata(batch, extra), corpus_csv(records, pre));
    REQUIRE_MESSAGE(r.status == 201, r.raw);
    return r.body["id"];
  }

  std::string label(const std::string& project, const std::string& name) {
    auto p = admin().get("/projects/" + project).body;
    for (const auto& l : p["labels"])
      if (l["name"] == name) return l["id"];
    FAIL("no label " << name);
    return {};
  }
};

}  // namespace

TEST_CASE("health, authentication and login") {
  Env env;
  env.bootstrap_admin();
  auto h = env.anon().get("/healthz");
  CHECK(h.status == 200);
  CHECK(h.body["status"] == "ok");
  CHECK(env.anon().get("/projects").status == 401);
  CHECK(env.anon().as("bogus").get("/projects").status == 401);
  CHECK(env.anon().post("/sessions", {{"username", "root"}, {"password", "wrong"}}).status == 401);
  auto login = env.anon().post("/sessions", {{"username", "root"}, {"password", "secret"}});
  CHECK(login.status == 201);
  CHECK(env.anon().as(login.body["token"]).get("/projects").status == 200);
  auto err = env.anon().get("/nowhere");
  CHECK(err.status == 404);
  CHECK(err.body.contains("code"));
  CHECK(err.body.contains("message"));
  CHECK(err.body["details"].is_array());

  // sessions expire
  env.clock += 13h;
  CHECK(env.anon().as(login.body["token"]).get("/projects").status == 401);
}

TEST_CASE("project creation") {
  Env env;
  env.bootstrap_admin();

  SUBCASE("valid project gets batch 0") {
    auto r = env.admin().create_project(metadata(5), corpus_csv(20));
    REQUIRE(r.status == 201);
    CHECK(r.body["batch"]["index"] == 0);
    CHECK(r.body["batch"]["selection_method"] == "random");
    CHECK(r.body["ingest"]["accepted"] == 20);
    auto p = env.admin().get("/projects/" + r.body["id"].get<std::string>());
    CHECK(p.status == 200);
    CHECK(p.body["batches"].size() == 1);
    CHECK(p.body["records"]["by_status"]["in_batch"] == 5);
  }
  SUBCASE("pre-labels covering two classes seed uncertainty selection") {
    auto r = env.admin().create_project(metadata(5, {{"al_method", "margin"}}), corpus_csv(20, 6));
    REQUIRE(r.status == 201);
    CHECK(r.body["batch"]["selection_method"] == "margin");
  }
  SUBCASE("missing Text column") {
    auto r = env.admin().create_project(metadata(), "ID,Label\n1,pos\n");
    CHECK(r.status == 400);
    CHECK(r.body["message"] == "missing Text column");
  }
  SUBCASE("every validation error is reported") {
    json meta = {{"name", ""}, {"labels", {"pos"}}, {"settings", {{"batch_size", 0}}}};
    auto r = env.admin().create_project(meta, corpus_csv(3));
    CHECK(r.status == 400);
    CHECK(r.body["details"].size() >= 3);
  }
  SUBCASE("ingest report lists excluded rows") {
    auto r = env.admin().create_project(metadata(), "Text,Label\nsame thing,pos\nsame thing,neg\nother one,maybe\nthird text,\n");
    REQUIRE(r.status == 201);
    CHECK(r.body["ingest"]["accepted"] == 2);
    CHECK(r.body["ingest"]["excluded"].size() == 2);
  }
  SUBCASE("coders cannot create projects") {
    auto id = env.create();
    auto coder = env.coder_token(id, "cora");
    CHECK(env.admin().as(coder).create_project(metadata(), corpus_csv(5)).status == 403);
  }
}

TEST_CASE("annotation flow") {
  Env env;
  env.bootstrap_admin();
  auto id = env.create(12, 0, 4);
  auto cora = env.admin().as(env.coder_token(id, "cora"));
  const auto pos = env.label(id, "pos"), neg = env.label(id, "neg");

  auto next = cora.get("/projects/" + id + "/next");
  REQUIRE(next.status == 200);
  CHECK(next.body["empty"] == false);
  CHECK(next.body["labels"].size() == 2);
  CHECK(cora.get("/projects/" + id + "/next").body["assignment_id"] == next.body["assignment_id"]);
  const std::string assignment = next.body["assignment_id"];

  CHECK(cora.post("/assignments/" + assignment + "/label", {{"label_id", "12345"}}).status == 400);
  env.clock += 2500ms;
  auto labeled = cora.post("/assignments/" + assignment + "/label", {{"label_id", pos}});
  REQUIRE(labeled.status == 200);
  CHECK(labeled.body["outcome"] == "finalized");
  CHECK(cora.post("/assignments/" + assignment + "/label", {{"label_id", pos}}).status == 409);
  CHECK(cora.post("/assignments/999/label", {{"label_id", pos}}).status == 404);

  auto history = cora.get("/projects/" + id + "/history");
  REQUIRE(history.body["items"].size() == 1);
  CHECK(history.body["items"][0]["elapsed_ms"] == 2500);
  const std::string annotation = history.body["items"][0]["id"];
  auto modified = cora.patch("/annotations/" + annotation, {{"label_id", neg}});
  REQUIRE(modified.status == 200);
  CHECK(modified.body["superseded"] == annotation);
  history = cora.get("/projects/" + id + "/history");
  REQUIRE(history.body["items"].size() == 1);
  CHECK(history.body["items"][0]["label"] == "neg");
  CHECK(history.body["items"][0]["superseded"] == false);

  // label by name works too; label the rest of the batch
  for (int i = 0; i < 3; ++i) {
    auto n = cora.get("/projects/" + id + "/next");
    REQUIRE(n.body["empty"] == false);
    CHECK(cora.post("/assignments/" + n.body["assignment_id"].get<std::string>() + "/label", {{"label", i % 2 ? "pos" : "neg"}})
              .status == 200);
  }
  env.service->wait_idle();
  auto after = env.admin().get("/projects/" + id).body;
  CHECK(after["batches"].size() == 2);
  CHECK(after["snapshots"] == 1);

  SUBCASE("cross-project access is forbidden") {
    auto other = env.create();
    CHECK(cora.get("/projects/" + other + "/next").status == 403);
    CHECK(cora.get("/projects/" + other).status == 403);
    CHECK(cora.get("/projects/999").status == 404);
  }
  SUBCASE("exhausted queue answers with the empty marker") {
    for (int round = 0; round < 10; ++round) {
      auto n = cora.get("/projects/" + id + "/next");
      if (n.body["empty"] == true) break;
      cora.post("/assignments/" + n.body["assignment_id"].get<std::string>() + "/label", {{"label", "pos"}});
      env.service->wait_idle();
    }
    auto n = cora.get("/projects/" + id + "/next");
    CHECK(n.status == 200);
    CHECK(n.body["empty"] == true);
  }
}

TEST_CASE("admin flow") {
  Env env;
  env.bootstrap_admin();
  auto id = env.create(30, 0, 10, {{"irr_enabled", true}, {"irr_overlap_percent", 20}});
  auto cora = env.admin().as(env.coder_token(id, "cora"));
  auto dave = env.admin().as(env.coder_token(id, "dave"));
  const auto pos = env.label(id, "pos"), neg = env.label(id, "neg");

  // both coders get the two double-coded records first only if they are lowest
  // in upload order; walk the batch until both have voted on a shared record
  std::map<std::string, int> votes;
  std::string skipped_record;
  for (int i = 0; i < 12; ++i) {
    for (auto* c : {&cora, &dave}) {
      auto n = c->get("/projects/" + id + "/next");
      if (n.body["empty"] == true) continue;
      const std::string rec = n.body["record_id"];
      const std::string asg = n.body["assignment_id"];
      if (n.body["double_coded"] == true) {
        c->post("/assignments/" + asg + "/label", {{"label_id", c == &cora ? pos : neg}});
      } else if (skipped_record.empty()) {
        CHECK(c->post("/assignments/" + asg + "/skip").status == 200);
        skipped_record = rec;
      } else {
        c->post("/assignments/" + asg + "/label", {{"label_id", pos}});
      }
    }
  }
  REQUIRE_FALSE(skipped_record.empty());

  auto skipped = env.admin().get("/projects/" + id + "/admin/skipped");
  REQUIRE(skipped.status == 200);
  REQUIRE(skipped.body["items"].size() == 1);
  CHECK(skipped.body["items"][0]["record_id"] == skipped_record);
  CHECK(cora.get("/projects/" + id + "/admin/skipped").status == 403);

  auto disagreements = env.admin().get("/projects/" + id + "/admin/disagreements");
  REQUIRE(disagreements.body["items"].size() == 2);
  CHECK(disagreements.body["items"][0]["votes"].size() == 2);

  CHECK(cora.post("/records/" + skipped_record + "/adjudicate", {{"label_id", pos}}).status == 403);
  auto adj = env.admin().post("/records/" + skipped_record + "/adjudicate", {{"label_id", pos}});
  CHECK(adj.status == 200);
  CHECK(adj.body["status"] == "labeled");
  CHECK(env.admin().post("/records/" + skipped_record + "/adjudicate", {{"label_id", pos}}).status == 409);

  const std::string conflict = disagreements.body["items"][0]["record_id"];
  CHECK(env.admin().post("/records/" + conflict + "/adjudicate", {{"discard", true}}).body["status"] == "discarded");
  const std::string conflict2 = disagreements.body["items"][1]["record_id"];
  CHECK(env.admin().post("/records/" + conflict2 + "/discard").status == 200);
  CHECK(env.admin().post("/records/" + conflict2 + "/discard").status == 409);

  auto irr = env.admin().get("/projects/" + id + "/metrics/irr");
  CHECK(irr.body["enabled"] == true);
  CHECK(irr.body["statistic"] == "cohen");
  CHECK(irr.body["items"] == 2);
  CHECK(irr.body["matrix"][1][0] == 2);
  CHECK(irr.body["labels"] == json({"neg", "pos"}));

  SUBCASE("settings") {
    CHECK(env.admin().patch("/projects/" + id + "/settings", {{"batch_size", 50}}).status == 409);
    CHECK(env.admin().patch("/projects/" + id + "/settings", {{"cv_folds", 3}}).status == 400);
    auto ok = env.admin().patch("/projects/" + id + "/settings", {{"lease_ttl_seconds", 120}, {"al_method", "entropy"}});
    CHECK(ok.status == 200);
    CHECK(ok.body["lease_ttl_seconds"] == 120);
    CHECK(cora.patch("/projects/" + id + "/settings", {{"lease_ttl_seconds", 60}}).status == 403);
  }
  SUBCASE("admin label") {
    auto p = env.admin().get("/projects/" + id).body;
    // the adjudications completed batch 0, so batch 1 has been selected
    env.service->wait_idle();
    p = env.admin().get("/projects/" + id).body;
    CHECK(p["records"]["by_status"]["unlabeled"] == 10);
    CHECK(p["records"]["by_status"]["in_batch"] == 10);
    std::string unlabeled;
    for (int seq = 1; seq < 200 && unlabeled.empty(); ++seq) {
      const auto rid = std::to_string(labelforge::compose_id(labelforge::ProjectId{std::stoull(id)}, seq));
      auto r = env.admin().post("/records/" + rid + "/admin-label", {{"label_id", neg}});
      if (r.status == 200) unlabeled = rid;
    }
    CHECK_FALSE(unlabeled.empty());
    CHECK(env.admin().post("/records/" + unlabeled + "/admin-label", {{"label_id", neg}}).status == 409);
    CHECK(cora.post("/records/" + unlabeled + "/admin-label", {{"label_id", neg}}).status == 403);
  }
}

TEST_CASE("metrics and exports") {
  Env env;
  env.bootstrap_admin();
  auto id = env.create(20, 0, 5);
  auto cora = env.admin().as(env.coder_token(id, "cora"));

  CHECK(env.admin().get("/projects/" + id + "/metrics/irr").body == json({{"enabled", false}}));
  CHECK(env.admin().get("/projects/" + id + "/export/model").status == 404);
  CHECK(env.admin().get("/projects/" + id + "/codebook").status == 404);

  const std::vector<int> durations{1, 2, 3, 4, 100};
  for (int ms : durations) {
    auto n = cora.get("/projects/" + id + "/next");
    env.clock += std::chrono::milliseconds(ms);
    cora.post("/assignments/" + n.body["assignment_id"].get<std::string>() + "/label", {{"label", ms % 2 ? "pos" : "neg"}});
  }
  env.service->wait_idle();
  auto timing = env.admin().get("/projects/" + id + "/metrics/timing");
  REQUIRE(timing.body["coders"].size() == 1);
  auto box = timing.body["coders"][0]["elapsed_ms"];
  CHECK(box["q1"] == 2.0);
  CHECK(box["median"] == 3.0);
  CHECK(box["q3"] == 4.0);
  CHECK(box["upper_whisker"] == 4.0);
  CHECK(box["outliers"] == json({100.0}));

  auto labels = env.admin().get("/projects/" + id + "/metrics/labels");
  CHECK(labels.body["coders"][0]["username"] == "cora");
  CHECK(labels.body["coders"][0]["counts"]["pos"] == 2);
  CHECK(labels.body["coders"][0]["counts"]["neg"] == 3);

  auto model = env.admin().get("/projects/" + id + "/metrics/model");
  CHECK(model.body["enabled"] == true);
  REQUIRE(model.body["series"].size() == 1);
  CHECK(model.body["series"][0]["batch_index"] == 0);
  for (int i = 0; i < 5; ++i) {
    auto n = cora.get("/projects/" + id + "/next");
    cora.post("/assignments/" + n.body["assignment_id"].get<std::string>() + "/label", {{"label", i % 2 ? "pos" : "neg"}});
  }
  env.service->wait_idle();
  model = env.admin().get("/projects/" + id + "/metrics/model");
  REQUIRE(model.body["series"].size() == 2);
  CHECK(model.body["series"][1]["batch_index"] == 1);
  CHECK(cora.get("/projects/" + id + "/metrics/model").status == 403);

  auto data = env.admin().get("/projects/" + id + "/export/data");
  REQUIRE(data.status == 200);
  CHECK(data.headers["Content-Disposition"].find("attachment") != std::string::npos);
  auto rows = labelforge::read_csv(labelforge::zip::read_archive(data.raw).at("labeled_data.csv"));
  REQUIRE(rows.size() == 11);
  for (std::size_t i = 2; i < rows.size(); ++i) CHECK(rows[i - 1][2] <= rows[i][2]);
  CHECK(cora.get("/projects/" + id + "/export/data").status == 403);

  auto bundle = env.admin().get("/projects/" + id + "/export/model");
  REQUIRE(bundle.status == 200);
  auto files = labelforge::zip::read_archive(bundle.raw);
  CHECK(files.size() == 3);

  SUBCASE("model endpoint on an AL-disabled project") {
    auto off = env.create(10, 4, 5, {{"al_enabled", false}});
    auto m = env.admin().get("/projects/" + off + "/metrics/model");
    CHECK(m.status == 200);
    CHECK(m.body["enabled"] == false);
    CHECK(m.body["series"].empty());
    CHECK(env.admin().get("/projects/" + off + "/export/model").status == 404);
  }
  SUBCASE("codebook") {
    auto r = env.admin().create_project(metadata(), corpus_csv(6), "%PDF-1.4 fake");
    const std::string pid = r.body["id"];
    auto cb = cora.as(env.admin_token).get("/projects/" + pid + "/codebook");
    CHECK(cb.status == 200);
    CHECK(cb.raw == "%PDF-1.4 fake");
  }
}

TEST_CASE("endpoint permission audit") {
  Env env;
  env.bootstrap_admin();
  auto id = env.create(20, 0, 5);
  auto coder_token = env.coder_token(id, "cora");
  const std::string entity = std::to_string(labelforge::compose_id(labelforge::ProjectId{std::stoull(id)}, 1));

  std::set<std::string> public_routes;
  for (const auto& route : srv::Service::routes()) {
    INFO(route.method << " " << route.pattern);
    CHECK(route.pattern.rfind("/api/v1/", 0) == 0);
    if (!route.action) {
      public_routes.insert(route.method + " " + route.pattern);
      continue;
    }
    std::string path = route.pattern.substr(std::string("/api/v1").size());
    auto pos = path.find("{id}");
    if (pos != std::string::npos) path.replace(pos, 4, path.rfind("/projects", 0) == 0 ? id : entity);

    auto unauth = env.anon().call(route.method, path, json::object());
    CHECK(unauth.status == 401);

    auto as_coder = env.anon().as(coder_token).call(route.method, path, json::object());
    if (!labelforge::check_permission(labelforge::Role::coder, *route.action))
      CHECK(as_coder.status == 403);
    else
      CHECK(as_coder.status != 403);
  }
  // only login and the health check are public; every mutating route is guarded
  CHECK(public_routes == std::set<std::string>{"POST /api/v1/sessions", "GET /api/v1/healthz"});
  for (const auto& route : srv::Service::routes())
    if (route.mutating && route.pattern != "/api/v1/sessions") CHECK(route.action.has_value());
  std::size_t mutating = 0;
  for (const auto& route : srv::Service::routes()) mutating += route.mutating && route.action.has_value();
  CHECK(mutating == 10);
}

TEST_CASE("state survives a restart") {
  Env env;
  env.bootstrap_admin();
  auto id = env.create(20, 0, 5);
  auto cora_token = env.coder_token(id, "cora");
  auto cora = env.admin().as(cora_token);
  for (int i = 0; i < 5; ++i) {
    auto n = cora.get("/projects/" + id + "/next");
    cora.post("/assignments/" + n.body["assignment_id"].get<std::string>() + "/label", {{"label", i % 2 ? "pos" : "neg"}});
  }
  env.service->wait_idle();
  auto pending = cora.get("/projects/" + id + "/next");
  auto before = env.admin().get("/projects/" + id).body;
  auto model_before = env.admin().get("/projects/" + id + "/metrics/model").body;
  auto export_before = env.admin().get("/projects/" + id + "/export/model").raw;

  env.service.reset();
  env.start();
  CHECK(env.admin().get("/projects/" + id).body == before);
  CHECK(env.admin().get("/projects/" + id + "/metrics/model").body == model_before);
  CHECK(env.admin().get("/projects/" + id + "/export/model").raw == export_before);
  auto again = env.admin().as(cora_token).get("/projects/" + id + "/next");
  CHECK(again.body["assignment_id"] == pending.body["assignment_id"]);

  // leases older than the TTL expire on the first sweep
  env.clock += 16min;
  CHECK(env.service->sweep_leases() == 1);
}

TEST_CASE("http transport") {
  TempDir dir;
  auto config = test_config(dir);
  config.upload_cap_bytes = 4096;
  srv::Service service(config);
  service.create_user("root", labelforge::Role::admin, "secret");
  const int port = service.listen_in_background();
  httplib::Client client("127.0.0.1", port);

  auto health = client.Get("/api/v1/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto login = client.Post("/api/v1/sessions", R"({"username":"root","password":"secret"})", "application/json");
  REQUIRE(login);
  const std::string token = json::parse(login->body)["token"];
  httplib::Headers auth{{"Authorization", "Bearer " + token}};

  httplib::MultipartFormDataItems items{
      {"metadata", metadata().dump(), "", "application/json"},
      {"data", corpus_csv(10), "data.csv", "text/csv"},
  };
  auto created = client.Post("/api/v1/projects", auth, items);
  REQUIRE(created);
  CHECK(created->status == 201);

  httplib::MultipartFormDataItems big{
      {"metadata", metadata().dump(), "", "application/json"},
      {"data", corpus_csv(400), "data.csv", "text/csv"},
  };
  auto too_big = client.Post("/api/v1/projects", auth, big);
  REQUIRE(too_big);
  CHECK(too_big->status == 413);
  service.stop();
}
