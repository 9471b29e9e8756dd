#pragma once

#include <nlohmann/json.hpp>

#include "labelforge/classifier.hpp"
#include "labelforge/project_state.hpp"

namespace labelforge {

// Persisted project state is split by how often each part changes:
//  - static:  name, description, creation time, labels and records (written once)
//  - dynamic: settings, members, record lifecycle fields, annotations,
//             assignments, batches (rewritten on every mutation)
//  - models:  vocabulary, snapshots and the selection model (written when they change)

nlohmann::json settings_to_json(const ProjectSettings& s);
// Missing keys keep their defaults. Throws Error(invalid_argument) on bad types or enum values.
ProjectSettings settings_from_json(const nlohmann::json& j, ProjectSettings base = {});

nlohmann::json project_static_to_json(const ProjectState& s);  // excludes record rows
nlohmann::json project_dynamic_to_json(const ProjectState& s);

nlohmann::json linear_model_to_json(const LinearModel& m);
LinearModel linear_model_from_json(const nlohmann::json& j);
nlohmann::json snapshot_to_json(const ModelSnapshot& s);
ModelSnapshot snapshot_from_json(const nlohmann::json& j);
nlohmann::json vocabulary_to_json(const Vocabulary& v);
Vocabulary vocabulary_from_json(const nlohmann::json& j);
nlohmann::json metrics_to_json(const Metrics& m);

// Reassembles a state. `records` carry id, external id, text and upload order;
// the dynamic document fills in the rest.
ProjectState assemble_project_state(const nlohmann::json& static_doc, std::vector<Record> records,
                                    const nlohmann::json& dynamic_doc,
                                    std::optional<nlohmann::json> vocabulary,
                                    std::vector<ModelSnapshot> snapshots,
                                    std::optional<nlohmann::json> selection_model);

}  // namespace labelforge
