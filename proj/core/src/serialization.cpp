#include "labelforge/serialization.hpp"

#include "labelforge/error.hpp"

namespace labelforge {

using nlohmann::json;

namespace {

std::int64_t to_ms(TimePoint t) { return t.time_since_epoch().count(); }
TimePoint from_ms(std::int64_t v) { return TimePoint{std::chrono::milliseconds{v}}; }


RecordStatus parse_status(const std::string& s) {
  for (auto st : {RecordStatus::unlabeled, RecordStatus::in_batch, RecordStatus::assigned, RecordStatus::labeled,
                  RecordStatus::pending_skip_adjudication, RecordStatus::pending_irr_adjudication,
                  RecordStatus::discarded})
    if (to_string(st) == s) return st;
  throw Error(ErrorCode::invalid_argument, "unknown record status " + s);
}

AnnotationSource parse_source(const std::string& s) {
  for (auto src : {AnnotationSource::coder, AnnotationSource::admin_adjudication, AnnotationSource::pre_labeled})
    if (to_string(src) == s) return src;
  throw Error(ErrorCode::invalid_argument, "unknown annotation source " + s);
}

AssignmentResolution parse_resolution(const std::string& s) {
  for (auto r : {AssignmentResolution::pending, AssignmentResolution::labeled, AssignmentResolution::skipped,
                 AssignmentResolution::expired})
    if (to_string(r) == s) return r;
  throw Error(ErrorCode::invalid_argument, "unknown assignment resolution " + s);
}

AlMethod parse_method(const std::string& s) {
  auto m = parse_al_method(s);
  if (!m) throw Error(ErrorCode::invalid_argument, "unknown al_method '" + s + "'");
  return *m;
}

template <class IdT>
json opt_id(const std::optional<IdT>& id) {
  return id ? json(id->value) : json(nullptr);
}

template <class IdT>
std::optional<IdT> opt_id_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return IdT{j.get<std::uint64_t>()};
}

}  // namespace

json settings_to_json(const ProjectSettings& s) {
  return json{{"batch_size", s.batch_size},
              {"al_method", std::string(to_string(s.al_method))},
              {"al_enabled", s.al_enabled},
              {"irr_enabled", s.irr_enabled},
              {"irr_overlap_percent", s.irr_overlap_percent},
              {"irr_coder_count", s.irr_coder_count},
              {"lease_ttl_seconds", s.lease_ttl_seconds},
              {"max_vocabulary", s.max_vocabulary},
              {"cv_folds", s.cv_folds},
              {"l2_lambda", s.l2_lambda}};
}

ProjectSettings settings_from_json(const json& j, ProjectSettings s) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "settings must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "batch_size") s.batch_size = value.get<int>();
      else if (key == "al_method") s.al_method = parse_method(value.get<std::string>());
      else if (key == "al_enabled") s.al_enabled = value.get<bool>();
      else if (key == "irr_enabled") s.irr_enabled = value.get<bool>();
      else if (key == "irr_overlap_percent") s.irr_overlap_percent = value.get<int>();
      else if (key == "irr_coder_count") s.irr_coder_count = value.get<int>();
      else if (key == "lease_ttl_seconds") s.lease_ttl_seconds = value.get<int>();
      else if (key == "max_vocabulary") s.max_vocabulary = value.get<int>();
      else if (key == "cv_folds") s.cv_folds = value.get<int>();
      else if (key == "l2_lambda") s.l2_lambda = value.get<double>();
      else throw Error(ErrorCode::invalid_argument, "unknown setting '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("bad settings value: ") + e.what());
  }
  return s;
}

json project_static_to_json(const ProjectState& s) {
  json labels = json::array();
  for (const auto& l : s.labels) labels.push_back({{"id", l.id.value}, {"name", l.name}, {"description", l.description}});
  return json{{"id", s.project.id.value},
              {"name", s.project.name},
              {"description", s.project.description},
              {"created_at", to_ms(s.project.created_at)},
              {"labels", labels}};
}

json project_dynamic_to_json(const ProjectState& s) {
  json members = json::array();
  for (const auto& m : s.members)
    members.push_back({{"id", m.id.value}, {"username", m.username}, {"role", std::string(to_string(m.role))}});

  json records = json::array();
  for (const auto& r : s.records)
    records.push_back(json::array({std::string(to_string(r.status)), r.double_coded, r.batch_index,
                                   opt_id(r.final_label), opt_id(r.deciding_annotation)}));

  json annotations = json::array();
  for (const auto& a : s.annotations)
    annotations.push_back(json::array({a.id.value, a.record_id.value, a.coder_id.value, a.label_id.value,
                                       a.elapsed_ms, std::string(to_string(a.source)), to_ms(a.created_at),
                                       a.superseded}));

  json assignments = json::array();
  for (const auto& a : s.assignments)
    assignments.push_back(json::array({a.id.value, a.record_id.value, a.coder_id.value, to_ms(a.issued_at),
                                       to_ms(a.lease_expires_at), to_ms(a.displayed_at),
                                       a.resolved_at ? json(to_ms(*a.resolved_at)) : json(nullptr),
                                       std::string(to_string(a.resolution))}));

  json batches = json::array();
  for (const auto& b : s.batches) {
    json ids = json::array();
    for (auto id : b.record_ids) ids.push_back(id.value);
    batches.push_back({{"id", b.id.value},
                       {"index", b.index},
                       {"record_ids", ids},
                       {"selection_method", std::string(to_string(b.selection_method))},
                       {"status", std::string(to_string(b.status))},
                       {"double_coded_count", b.double_coded_count}});
  }

  return json{{"settings", settings_to_json(s.project.settings)},
              {"members", members},
              {"records", records},
              {"annotations", annotations},
              {"assignments", assignments},
              {"batches", batches},
              {"next_sequence", s.next_sequence},
              {"cycled_batch_index", s.cycled_batch_index}};
}

json linear_model_to_json(const LinearModel& m) {
  return json{{"classes", m.classes},
              {"dimension", m.dimension},
              {"coefficients", m.coefficients},
              {"intercepts", m.intercepts},
              {"l2_lambda", m.l2_lambda}};
}

LinearModel linear_model_from_json(const json& j) {
  LinearModel m;
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.dimension = j.at("dimension").get<std::size_t>();
  m.coefficients = j.at("coefficients").get<std::vector<double>>();
  m.intercepts = j.at("intercepts").get<std::vector<double>>();
  m.l2_lambda = j.at("l2_lambda").get<double>();
  if (m.coefficients.size() != m.classes.size() * m.dimension || m.intercepts.size() != m.classes.size())
    throw Error(ErrorCode::invalid_argument, "linear model shape mismatch");
  return m;
}

json metrics_to_json(const Metrics& m) {
  return json{{"accuracy", m.accuracy},
              {"macro_precision", m.macro_precision},
              {"macro_recall", m.macro_recall},
              {"macro_f1", m.macro_f1}};
}

json snapshot_to_json(const ModelSnapshot& s) {
  return json{{"batch_index", s.batch_index},
              {"metrics", metrics_to_json(s.metrics)},
              {"model", linear_model_to_json(s.model)},
              {"trained_at", to_ms(s.trained_at)},
              {"training_size", s.training_size}};
}

ModelSnapshot snapshot_from_json(const json& j) {
  ModelSnapshot s;
  s.batch_index = j.at("batch_index").get<int>();
  const auto& m = j.at("metrics");
  s.metrics = Metrics{m.at("accuracy").get<double>(), m.at("macro_precision").get<double>(),
                      m.at("macro_recall").get<double>(), m.at("macro_f1").get<double>()};
  s.model = linear_model_from_json(j.at("model"));
  s.trained_at = from_ms(j.at("trained_at").get<std::int64_t>());
  s.training_size = j.at("training_size").get<std::size_t>();
  return s;
}

json vocabulary_to_json(const Vocabulary& v) {
  return json{{"tokens", v.tokens()}, {"document_frequency", v.document_frequency()}, {"corpus_size", v.corpus_size()}};
}

Vocabulary vocabulary_from_json(const json& j) {
  return Vocabulary::from_parts(j.at("tokens").get<std::vector<std::string>>(),
                                j.at("document_frequency").get<std::vector<std::uint64_t>>(),
                                j.at("corpus_size").get<std::uint64_t>());
}

ProjectState assemble_project_state(const json& st, std::vector<Record> records, const json& dyn,
                                    std::optional<json> vocabulary, std::vector<ModelSnapshot> snapshots,
                                    std::optional<json> selection_model) {
  ProjectState s;
  try {
    s.project.id = ProjectId{st.at("id").get<std::uint64_t>()};
    s.project.name = st.at("name").get<std::string>();
    s.project.description = st.at("description").get<std::string>();
    s.project.created_at = from_ms(st.at("created_at").get<std::int64_t>());
    for (const auto& l : st.at("labels"))
      s.labels.push_back(LabelClass{LabelId{l.at("id").get<std::uint64_t>()}, l.at("name").get<std::string>(),
                                    l.at("description").get<std::string>()});

    s.project.settings = settings_from_json(dyn.at("settings"));
    for (const auto& m : dyn.at("members")) {
      auto role = parse_role(m.at("role").get<std::string>());
      if (!role) throw Error(ErrorCode::invalid_argument, "bad member role");
      s.members.push_back(Coder{CoderId{m.at("id").get<std::uint64_t>()}, m.at("username").get<std::string>(), *role});
    }

    const auto& rec = dyn.at("records");
    if (rec.size() != records.size()) throw Error(ErrorCode::invalid_argument, "record count mismatch");
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& d = rec[i];
      auto& r = records[i];
      r.status = parse_status(d.at(0).get<std::string>());
      r.double_coded = d.at(1).get<bool>();
      r.batch_index = d.at(2).get<int>();
      r.final_label = opt_id_from<LabelId>(d.at(3));
      r.deciding_annotation = opt_id_from<AnnotationId>(d.at(4));
    }
    s.records = std::move(records);

    for (const auto& a : dyn.at("annotations"))
      s.annotations.push_back(Annotation{AnnotationId{a.at(0).get<std::uint64_t>()},
                                         RecordId{a.at(1).get<std::uint64_t>()},
                                         CoderId{a.at(2).get<std::uint64_t>()}, LabelId{a.at(3).get<std::uint64_t>()},
                                         a.at(4).get<std::int64_t>(), parse_source(a.at(5).get<std::string>()),
                                         from_ms(a.at(6).get<std::int64_t>()), a.at(7).get<bool>()});

    for (const auto& a : dyn.at("assignments")) {
      Assignment x;
      x.id = AssignmentId{a.at(0).get<std::uint64_t>()};
      x.record_id = RecordId{a.at(1).get<std::uint64_t>()};
      x.coder_id = CoderId{a.at(2).get<std::uint64_t>()};
      x.issued_at = from_ms(a.at(3).get<std::int64_t>());
      x.lease_expires_at = from_ms(a.at(4).get<std::int64_t>());
      x.displayed_at = from_ms(a.at(5).get<std::int64_t>());
      if (!a.at(6).is_null()) x.resolved_at = from_ms(a.at(6).get<std::int64_t>());
      x.resolution = parse_resolution(a.at(7).get<std::string>());
      s.assignments.push_back(x);
    }

    for (const auto& b : dyn.at("batches")) {
      Batch x;
      x.id = BatchId{b.at("id").get<std::uint64_t>()};
      x.index = b.at("index").get<int>();
      for (const auto& id : b.at("record_ids")) x.record_ids.push_back(RecordId{id.get<std::uint64_t>()});
      x.selection_method = parse_method(b.at("selection_method").get<std::string>());
      x.status = b.at("status").get<std::string>() == "complete" ? BatchStatus::complete : BatchStatus::open;
      x.double_coded_count = b.at("double_coded_count").get<std::size_t>();
      s.batches.push_back(std::move(x));
    }
    s.next_sequence = dyn.at("next_sequence").get<std::uint64_t>();
    s.cycled_batch_index = dyn.at("cycled_batch_index").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("corrupt project document: ") + e.what());
  }

  s.snapshots = std::move(snapshots);
  if (selection_model) s.selection_model = std::make_shared<const LinearModel>(linear_model_from_json(*selection_model));
  if (vocabulary) {
    s.vocabulary = std::make_shared<const Vocabulary>(vocabulary_from_json(*vocabulary));
  }
  s.rebuild_indexes();
  if (s.vocabulary) s.compute_features();
  return s;
}

}  // namespace labelforge
