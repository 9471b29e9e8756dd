#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "labelforge/error.hpp"

using namespace lftest;
namespace wf = labelforge::workflow;

namespace {

struct Fixture {
  Coder a = coder_user(1), b = coder_user(2), admin = admin_user();
  ProjectState s;

  explicit Fixture(ProjectSettings settings = {}, int records = 30) {
    StateOptions o;
    o.records = records;
    o.settings = settings;
    s = make_state(o, {a, b});
    run_cycle(s, t0());
  }

  ServedRecord serve(const Coder& c, TimePoint t = t0()) {
    auto r = wf::next_assignment(s, c, t);
    REQUIRE(r.has_value());
    return *r;
  }
};

ProjectSettings small_batch(int size = 10) {
  ProjectSettings p;
  p.batch_size = size;
  return p;
}

ProjectSettings irr_batch(int size = 10, int overlap = 10) {
  ProjectSettings p;
  p.batch_size = size;
  p.irr_enabled = true;
  p.irr_overlap_percent = overlap;
  return p;
}

}  // namespace

TEST_CASE("box plot on the worked sample") {
  auto b = box_plot({100, 3, 1, 4, 2});
  CHECK(b.count == 5);
  CHECK(b.q1 == 2.0);
  CHECK(b.median == 3.0);
  CHECK(b.q3 == 4.0);
  CHECK(b.minimum == 1.0);
  CHECK(b.maximum == 100.0);
  CHECK(b.lower_whisker == 1.0);
  CHECK(b.upper_whisker == 4.0);
  CHECK(b.outliers == std::vector<double>{100.0});

  auto one = box_plot({5});
  CHECK((one.minimum == 5 && one.q1 == 5 && one.median == 5 && one.q3 == 5 && one.maximum == 5));
  CHECK(one.outliers.empty());
  auto flat = box_plot({7, 7, 7, 7});
  CHECK(flat.outliers.empty());
  CHECK(flat.upper_whisker == 7);

  // interpolation: position q * (n - 1)
  auto even = box_plot({1, 2, 3, 4});
  CHECK(even.q1 == doctest::Approx(1.75));
  CHECK(even.median == doctest::Approx(2.5));
  CHECK(even.q3 == doctest::Approx(3.25));
}

TEST_CASE("serving follows upload order and is idempotent while leased") {
  Fixture f(small_batch());
  auto first = f.serve(f.a);
  auto again = f.serve(f.a);
  CHECK(again.assignment.id == first.assignment.id);
  auto other = f.serve(f.b);
  CHECK(other.record_id != first.record_id);
  const auto* r1 = f.s.find_record(first.record_id);
  const auto* r2 = f.s.find_record(other.record_id);
  CHECK(r1->upload_order < r2->upload_order);
  CHECK(r1->status == RecordStatus::assigned);
  CHECK(first.assignment.lease_expires_at == t0() + 900s);
}

TEST_CASE("one double-coded record in a batch of 10 at 10 percent overlap") {
  Fixture f(irr_batch());
  const auto& batch = f.s.batches[0];
  auto first = f.serve(f.a);
  auto second = f.serve(f.b);
  const auto dc = batch.record_ids[0];
  // the double-coded record is served to both coders when it is the lowest upload order left
  std::set<std::uint64_t> served_to_a{first.record_id.value}, served_to_b{second.record_id.value};
  for (int i = 0; i < 12; ++i) {
    if (auto r = wf::next_assignment(f.s, f.a, t0())) {
      served_to_a.insert(r->record_id.value);
      wf::submit_label(f.s, f.a, r->assignment.id, label_id(f.s, "pos"), t0() + 1s);
    }
    if (auto r = wf::next_assignment(f.s, f.b, t0())) {
      served_to_b.insert(r->record_id.value);
      wf::submit_label(f.s, f.b, r->assignment.id, label_id(f.s, "pos"), t0() + 1s);
    }
  }
  CHECK(served_to_a.count(dc.value) == 1);
  CHECK(served_to_b.count(dc.value) == 1);
  std::size_t shared = 0;
  for (auto id : served_to_a) shared += served_to_b.count(id);
  CHECK(shared == 1);
  CHECK(served_to_a.size() + served_to_b.size() == 11);
}

TEST_CASE("irr disabled never serves a record twice") {
  Fixture f(small_batch(20), 40);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 20; ++i) {
    for (const auto& c : {f.a, f.b}) {
      if (auto r = wf::next_assignment(f.s, c, t0())) {
        CHECK(seen.insert(r->record_id.value).second);
        wf::submit_label(f.s, c, r->assignment.id, label_id(f.s, "neg"), t0());
      }
    }
  }
  CHECK(seen.size() == 20);
}

TEST_CASE("submit outcomes") {
  SUBCASE("single-coded finalizes") {
    Fixture f(small_batch());
    auto r = f.serve(f.a);
    auto res = wf::submit_label(f.s, f.a, r.assignment.id, label_id(f.s, "pos"), t0() + 1500ms);
    CHECK(res.outcome == SubmitOutcome::finalized);
    const auto* rec = f.s.find_record(r.record_id);
    CHECK(rec->status == RecordStatus::labeled);
    CHECK(*rec->final_label == label_id(f.s, "pos"));
    CHECK(f.s.find_annotation(res.annotation)->elapsed_ms == 1500);
    CHECK_THROWS_AS(wf::submit_label(f.s, f.a, r.assignment.id, label_id(f.s, "pos"), t0()), Error);
  }
  SUBCASE("double-coded disagreement queues a conflict") {
    Fixture f(irr_batch(10, 100));
    auto ra = f.serve(f.a);
    auto rb = f.serve(f.b);
    REQUIRE(ra.record_id == rb.record_id);
    CHECK(wf::submit_label(f.s, f.a, ra.assignment.id, label_id(f.s, "pos"), t0()).outcome ==
          SubmitOutcome::awaiting_coders);
    CHECK(wf::submit_label(f.s, f.b, rb.assignment.id, label_id(f.s, "neg"), t0()).outcome ==
          SubmitOutcome::conflict_queued);
    CHECK(f.s.find_record(ra.record_id)->status == RecordStatus::pending_irr_adjudication);
    auto queue = wf::disagreements(f.s);
    REQUIRE(queue.size() == 1);
    CHECK(queue[0].votes.size() == 2);
  }
  SUBCASE("double-coded agreement finalizes") {
    Fixture f(irr_batch(10, 100));
    auto ra = f.serve(f.a);
    auto rb = f.serve(f.b);
    wf::submit_label(f.s, f.a, ra.assignment.id, label_id(f.s, "pos"), t0());
    auto res = wf::submit_label(f.s, f.b, rb.assignment.id, label_id(f.s, "pos"), t0());
    CHECK(res.outcome == SubmitOutcome::finalized);
    CHECK(*f.s.find_record(ra.record_id)->final_label == label_id(f.s, "pos"));
  }
  SUBCASE("unknown label is rejected") {
    Fixture f(small_batch());
    auto r = f.serve(f.a);
    CHECK_THROWS_AS(wf::submit_label(f.s, f.a, r.assignment.id, LabelId{999}, t0()), Error);
    CHECK(f.s.find_assignment(r.assignment.id)->resolution == AssignmentResolution::pending);
  }
}

TEST_CASE("skip routes to the admin queue") {
  Fixture f(small_batch());
  auto r = f.serve(f.a);
  wf::skip(f.s, f.a, r.assignment.id, t0());
  CHECK(f.s.find_record(r.record_id)->status == RecordStatus::pending_skip_adjudication);
  auto q = wf::skipped_queue(f.s);
  REQUIRE(q.size() == 1);
  CHECK(q[0].skipped_by == std::vector<CoderId>{f.a.id});
  CHECK_THROWS_AS(wf::skip(f.s, f.a, r.assignment.id, t0()), Error);

  SUBCASE("admin labels it") {
    wf::adjudicate(f.s, f.admin, r.record_id, Adjudication{label_id(f.s, "neg")}, t0());
    const auto* rec = f.s.find_record(r.record_id);
    CHECK(rec->status == RecordStatus::labeled);
    CHECK(f.s.find_annotation(*rec->deciding_annotation)->source == AnnotationSource::admin_adjudication);
  }
  SUBCASE("admin discards it") {
    wf::adjudicate(f.s, f.admin, r.record_id, Adjudication{}, t0());
    CHECK(f.s.find_record(r.record_id)->status == RecordStatus::discarded);
  }
  SUBCASE("coders may not adjudicate") {
    CHECK_THROWS_AS(wf::adjudicate(f.s, f.b, r.record_id, Adjudication{label_id(f.s, "neg")}, t0()), Error);
  }
  SUBCASE("the skipping coder is not served it again") {
    wf::adjudicate(f.s, f.admin, r.record_id, Adjudication{label_id(f.s, "neg")}, t0());
    for (int i = 0; i < 15; ++i)
      if (auto n = wf::next_assignment(f.s, f.a, t0())) {
        CHECK(n->record_id != r.record_id);
        wf::submit_label(f.s, f.a, n->assignment.id, label_id(f.s, "pos"), t0());
      }
  }
}

TEST_CASE("irr conflict adjudication keeps coder annotations") {
  Fixture f(irr_batch(10, 100));
  auto ra = f.serve(f.a);
  auto rb = f.serve(f.b);
  wf::submit_label(f.s, f.a, ra.assignment.id, label_id(f.s, "pos"), t0());
  wf::submit_label(f.s, f.b, rb.assignment.id, label_id(f.s, "neg"), t0());
  wf::adjudicate(f.s, f.admin, ra.record_id, Adjudication{label_id(f.s, "pos")}, t0());
  CHECK(f.s.find_record(ra.record_id)->status == RecordStatus::labeled);
  std::size_t coder_votes = 0;
  for (auto idx : f.s.annotations_of(ra.record_id)) {
    const auto& an = f.s.annotations[idx];
    if (an.source == AnnotationSource::coder && !an.superseded) ++coder_votes;
  }
  CHECK(coder_votes == 2);
  CHECK(irr_summary(f.s).items == 1);
}

TEST_CASE("admin label refuses records in flight") {
  Fixture f(small_batch(5), 20);
  auto r = f.serve(f.a);
  CHECK_THROWS_AS(wf::admin_label(f.s, f.admin, r.record_id, label_id(f.s, "pos"), t0()), Error);
  const Record* unlabeled = nullptr;
  for (const auto& rec : f.s.records)
    if (rec.status == RecordStatus::unlabeled) {
      unlabeled = &rec;
      break;
    }
  REQUIRE(unlabeled);
  auto id = unlabeled->id;
  wf::admin_label(f.s, f.admin, id, label_id(f.s, "neg"), t0());
  CHECK(f.s.find_record(id)->status == RecordStatus::labeled);
  CHECK_THROWS_AS(wf::admin_label(f.s, f.a, id, label_id(f.s, "neg"), t0()), Error);
}

TEST_CASE("lease expiry returns the record and honours late submissions") {
  Fixture f(small_batch());
  auto r = f.serve(f.a);
  CHECK(wf::expire_leases(f.s, t0() + 899s) == 0);
  CHECK(wf::expire_leases(f.s, t0() + 901s) == 1);
  CHECK(f.s.find_assignment(r.assignment.id)->resolution == AssignmentResolution::expired);
  CHECK(f.s.find_record(r.record_id)->status == RecordStatus::in_batch);

  SUBCASE("late submission accepted when not reassigned") {
    auto res = wf::submit_label(f.s, f.a, r.assignment.id, label_id(f.s, "pos"), t0() + 950s);
    CHECK(res.outcome == SubmitOutcome::finalized);
  }
  SUBCASE("reassigned record is served to another coder and the late label conflicts") {
    auto other = f.serve(f.b, t0() + 902s);
    CHECK(other.record_id == r.record_id);
    CHECK(other.assignment.id != r.assignment.id);
    CHECK_THROWS_AS(wf::submit_label(f.s, f.a, r.assignment.id, label_id(f.s, "pos"), t0() + 950s), Error);
  }
}

TEST_CASE("batch completion and settings mutability") {
  Fixture f(small_batch(4), 12);
  CHECK_FALSE(wf::check_batch_completion(f.s));
  for (int i = 0; i < 4; ++i) {
    auto r = f.serve(f.a);
    wf::submit_label(f.s, f.a, r.assignment.id, label_id(f.s, i % 2 ? "pos" : "neg"), t0());
  }
  CHECK(f.s.batches[0].status == BatchStatus::complete);
  CHECK(wf::needs_cycle(f.s));
  CHECK_FALSE(wf::next_assignment(f.s, f.a, t0()).has_value());

  SettingsPatch bs;
  bs.batch_size = 8;
  CHECK_THROWS_AS(wf::update_settings(f.s, f.admin, bs), Error);
  SettingsPatch ok;
  ok.lease_ttl_seconds = 60;
  ok.al_method = AlMethod::margin;
  wf::update_settings(f.s, f.admin, ok);
  CHECK(f.s.project.settings.lease_ttl_seconds == 60);
  CHECK_THROWS_AS(wf::update_settings(f.s, f.a, ok), Error);

  auto outcome = run_cycle(f.s, t0());
  CHECK(*outcome.snapshot_batch_index == 0);
  CHECK(f.s.batches[1].selection_method == AlMethod::margin);
}

TEST_CASE("dashboard statistics") {
  Fixture f(small_batch(10), 20);
  const std::vector<int> durations{1, 2, 3, 4, 100};
  std::vector<AnnotationId> mine;
  for (int ms : durations) {
    auto r = f.serve(f.a, t0());
    mine.push_back(wf::submit_label(f.s, f.a, r.assignment.id, label_id(f.s, ms == 1 ? "neg" : "pos"),
                                    t0() + std::chrono::milliseconds(ms))
                       .annotation);
  }
  auto timing = wf::timing_stats(f.s);
  REQUIRE(timing.size() == 1);
  CHECK(timing[0].elapsed_ms.q1 == 2);
  CHECK(timing[0].elapsed_ms.median == 3);
  CHECK(timing[0].elapsed_ms.q3 == 4);
  CHECK(timing[0].elapsed_ms.upper_whisker == 4);
  CHECK(timing[0].elapsed_ms.outliers == std::vector<double>{100});

  auto dist = wf::label_distribution(f.s);
  CHECK(dist["coder1"]["pos"] == 4);
  CHECK(dist["coder1"]["neg"] == 1);

  auto modified = wf::modify_annotation(f.s, f.a, mine[1], label_id(f.s, "neg"), t0() + 1h);
  CHECK(f.s.find_annotation(mine[1])->superseded);
  CHECK(modified.elapsed_ms == 2);
  dist = wf::label_distribution(f.s);
  CHECK(dist["coder1"]["pos"] == 3);
  CHECK(dist["coder1"]["neg"] == 2);
  CHECK(wf::timing_stats(f.s)[0].elapsed_ms.count == 5);
  CHECK(*f.s.find_record(modified.record_id)->final_label == label_id(f.s, "neg"));

  auto page = wf::history(f.s, f.a, 0, 2);
  CHECK(page.total == 5);
  REQUIRE(page.items.size() == 2);
  CHECK(page.items[0].id == modified.id);
  CHECK_THROWS_AS(wf::modify_annotation(f.s, f.b, modified.id, label_id(f.s, "pos"), t0()), Error);
  CHECK(wf::label_distribution(make_state({})).empty());
}

TEST_CASE("random operation sequences keep the invariants") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    ProjectSettings settings = irr_batch(8, 25);
    settings.irr_coder_count = 2 + static_cast<int>(seed % 2);
    StateOptions o;
    o.records = 40;
    o.settings = settings;
    std::vector<Coder> coders{coder_user(1), coder_user(2), coder_user(3)};
    auto s = make_state(o, coders);
    run_cycle(s, t0());
    auto now = t0();
    std::vector<ServedRecord> held;
    for (int step = 0; step < 400; ++step) {
      now += std::chrono::seconds(rng() % 200);
      try {
        switch (rng() % 7) {
          case 0:
          case 1:
            if (auto r = wf::next_assignment(s, coders[rng() % 3], now)) held.push_back(*r);
            break;
          case 2:
          case 3:
            if (!held.empty()) {
              auto r = held[rng() % held.size()];
              auto* c = s.find_member(r.assignment.coder_id);
              wf::submit_label(s, *c, r.assignment.id, s.labels[rng() % 2].id, now);
            }
            break;
          case 4:
            if (!held.empty()) {
              auto r = held[rng() % held.size()];
              wf::skip(s, *s.find_member(r.assignment.coder_id), r.assignment.id, now);
            }
            break;
          case 5:
            wf::expire_leases(s, now);
            break;
          case 6:
            for (const auto& q : wf::skipped_queue(s))
              wf::adjudicate(s, admin_user(), q.record, Adjudication{s.labels[rng() % 2].id}, now);
            for (const auto& q : wf::disagreements(s)) wf::adjudicate(s, admin_user(), q.record, Adjudication{}, now);
            break;
        }
      } catch (const Error&) {
      }
      if (wf::needs_cycle(s)) {
        try {
          run_cycle(s, now);
        } catch (const Error&) {
        }
      }
      auto problems = wf::verify_invariants(s);
      if (!problems.empty()) FAIL_CHECK(problems.front());
    }
    // a discarded record never leaves that state
    for (const auto& r : s.records)
      if (r.status == RecordStatus::discarded)
        for (auto ev : {RecordEvent::assign, RecordEvent::label, RecordEvent::select_into_batch})
          CHECK_FALSE(next_status(r.status, ev).has_value());
  }
}

TEST_CASE("coordinator reads see the previous state while a cycle trains") {
  StateOptions o;
  o.records = 60;
  o.settings.batch_size = 4;
  o.pre_labels = {"neg", "pos"};
  ProjectCoordinator pc(make_state(o, {coder_user(1)}));
  std::vector<std::function<void()>> queued;
  pc.set_scheduler([&](ProjectCoordinator::Task t) { queued.push_back(std::move(t)); });
  pc.set_clock([] { return t0(); });
  pc.run_cycle_now(t0());
  std::size_t commits = 0;
  pc.set_commit_hook([&](const ProjectState&) { ++commits; });
  const auto c = coder_user(1);
  for (int i = 0; i < 4; ++i) {
    auto r = pc.next_assignment(c, t0());
    REQUIRE(r);
    pc.submit_label(c, r->assignment.id, pc.read([i](const ProjectState& s) { return s.labels[i % 2].id; }), t0());
  }
  REQUIRE(queued.size() == 1);
  CHECK(pc.cycle_in_flight());
  CHECK(pc.read([](const ProjectState& s) { return s.snapshots.size(); }) == 0);
  CHECK_FALSE(pc.next_assignment(c, t0()).has_value());
  std::thread worker(queued[0]);
  worker.join();
  CHECK_FALSE(pc.cycle_in_flight());
  CHECK(pc.read([](const ProjectState& s) { return s.snapshots.size(); }) == 1);
  CHECK(pc.read([](const ProjectState& s) { return s.batches.size(); }) == 2);
  CHECK(commits >= 9);
  CHECK_FALSE(pc.last_cycle_error().has_value());
}

TEST_CASE("a failing commit hook leaves the live state untouched") {
  StateOptions o;
  o.records = 10;
  o.settings.batch_size = 5;
  ProjectCoordinator pc(make_state(o, {coder_user(1)}));
  pc.run_cycle_now(t0());
  pc.set_commit_hook([](const ProjectState&) { throw Error(ErrorCode::internal, "disk full"); });
  CHECK_THROWS_AS(pc.next_assignment(coder_user(1), t0()), Error);
  CHECK(pc.read([](const ProjectState& s) { return s.assignments.size(); }) == 0);
}
