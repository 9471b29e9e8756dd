#include "api_client.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "labelforge/error.hpp"
#include "labelforge/serialization.hpp"

using namespace lftest;

TEST_CASE("store users and sessions") {
  TempDir dir;
  srv::Store store(dir.path());
  auto u = store.create_user("ann", Role::coder, "hash");
  CHECK(u.id);
  CHECK_THROWS_AS(store.create_user("ann", Role::admin, "x"), Error);
  CHECK(store.find_user("ann")->user.id == u.id);
  CHECK(store.find_user(u.id)->password_hash == "hash");
  CHECK_FALSE(store.find_user("nobody").has_value());

  store.put_session("t1", u.id, t0() + 10s);
  store.put_session("t2", u.id, t0() - 10s);
  CHECK(store.find_session("t1")->first == u.id);
  CHECK(store.purge_sessions(t0()) == 1);
  CHECK_FALSE(store.find_session("t2").has_value());
}

TEST_CASE("store persists projects incrementally") {
  TempDir dir;
  StateOptions o;
  o.records = 30;
  o.settings.batch_size = 5;
  o.pre_labels = {"neg", "pos"};
  auto c = coder_user(1);
  nlohmann::json dynamic_before;
  {
    srv::Store store(dir.path());
    auto id = store.allocate_project_id();
    CHECK(id == ProjectId{1});
    auto s = make_state(o, {c});
    s.project.id = id;
    store.create_project(s);
    run_cycle(s, t0());
    store.save_project(s);
    auto served = workflow::next_assignment(s, c, t0());
    workflow::submit_label(s, c, served->assignment.id, s.labels[0].id, t0() + 1s);
    store.save_project(s);
    dynamic_before = project_dynamic_to_json(s);
    CHECK(store.allocate_project_id() == ProjectId{2});
  }
  srv::Store reopened(dir.path());
  auto projects = reopened.load_projects();
  REQUIRE(projects.size() == 1);
  CHECK(project_dynamic_to_json(projects[0]) == dynamic_before);
  CHECK(projects[0].selection_model != nullptr);
  CHECK(projects[0].records.size() == 30);
}
