#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "labelforge/project_state.hpp"

namespace labelforge {

std::string format_timestamp(TimePoint t);  // ISO-8601 UTC, millisecond precision

// labeled_data.csv: ID,Text,Label for every labeled record, sorted by label
// name (byte order) then upload order. ID is the external id when present,
// otherwise the internal record id.
std::string labeled_data_csv(const ProjectState& state);
std::string export_labeled_zip(const ProjectState& state);

// Portable form of the newest model snapshot plus the fitted vectorizer.
struct ModelBundle {
  std::vector<std::string> classes;
  std::vector<std::string> vocabulary;
  std::vector<double> idf;
  std::vector<std::vector<double>> coefficients;  // classes x vocabulary
  std::vector<double> intercepts;
  std::string tokenizer;
  std::string project_name;
  int batch_index = 0;
  std::string created_at;
};

// Throws Error(not_found, "model unavailable") when active learning is off or
// no snapshot exists yet.
ModelBundle make_model_bundle(const ProjectState& state);

nlohmann::json model_json(const ModelBundle& bundle);
nlohmann::json vectorizer_json(const ModelBundle& bundle);
// Inverse of model_json; validates shapes.
ModelBundle parse_model_json(const nlohmann::json& j);

// model.json, vectorizer.json and README.md.
std::string export_model_bundle(const ProjectState& state);

std::string generate_readme(const ProjectState& state);

}  // namespace labelforge
