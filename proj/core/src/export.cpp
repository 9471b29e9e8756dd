#include "labelforge/export.hpp"

#include <algorithm>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "labelforge/csv.hpp"
#include "labelforge/error.hpp"
#include "labelforge/vectorizer.hpp"
#include "labelforge/zip.hpp"

namespace labelforge {

std::string format_timestamp(TimePoint t) {
  using namespace std::chrono;
  const auto secs = floor<seconds>(t);
  const auto ms = (t - secs).count();
  std::time_t tt = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return out.str();
}

std::string labeled_data_csv(const ProjectState& state) {
  struct Row {
    const std::string* label;
    std::uint64_t order;
    const Record* record;
  };
  std::vector<Row> rows;
  for (const auto& r : state.records) {
    if (r.status != RecordStatus::labeled || !r.final_label) continue;
    rows.push_back(Row{&state.find_label(*r.final_label)->name, r.upload_order, &r});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (*a.label != *b.label) return *a.label < *b.label;
    return a.order < b.order;
  });

  std::string out;
  append_csv_row(out, {"ID", "Text", "Label"});
  for (const auto& row : rows) {
    const auto& r = *row.record;
    append_csv_row(out, {r.external_id ? *r.external_id : to_string(r.id), r.text, *row.label});
  }
  return out;
}

std::string export_labeled_zip(const ProjectState& state) {
  return zip::write_archive({{"labeled_data.csv", labeled_data_csv(state)}});
}

ModelBundle make_model_bundle(const ProjectState& state) {
  if (!state.project.settings.al_enabled || state.snapshots.empty() || !state.vocabulary)
    throw Error(ErrorCode::not_found, "model unavailable");
  const auto& snap = state.snapshots.back();
  const auto& model = snap.model;
  const auto& vocab = *state.vocabulary;

  ModelBundle b;
  b.classes = model.classes;
  b.vocabulary = vocab.tokens();
  b.idf = vocab.idf();
  b.intercepts = model.intercepts;
  b.coefficients.resize(model.class_count());
  for (std::size_t c = 0; c < model.class_count(); ++c)
    b.coefficients[c].assign(model.coefficients.begin() + static_cast<std::ptrdiff_t>(c * model.dimension),
                             model.coefficients.begin() + static_cast<std::ptrdiff_t>((c + 1) * model.dimension));
  b.tokenizer = std::string(kTokenizerName);
  b.project_name = state.project.name;
  b.batch_index = snap.batch_index;
  b.created_at = format_timestamp(snap.trained_at);
  return b;
}

nlohmann::json model_json(const ModelBundle& b) {
  return nlohmann::json{
      {"classes", b.classes},
      {"vocabulary", b.vocabulary},
      {"idf", b.idf},
      {"coefficients", b.coefficients},
      {"intercepts", b.intercepts},
      {"metadata",
       {{"project_name", b.project_name},
        {"batch_index", b.batch_index},
        {"created_at", b.created_at},
        {"tokenizer", b.tokenizer},
        {"model", "multinomial_logistic_regression"}}},
  };
}

nlohmann::json vectorizer_json(const ModelBundle& b) {
  return nlohmann::json{{"tokenizer", b.tokenizer}, {"tokens", b.vocabulary}, {"idf", b.idf}};
}

ModelBundle parse_model_json(const nlohmann::json& j) {
  ModelBundle b;
  try {
    b.classes = j.at("classes").get<std::vector<std::string>>();
    b.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    b.idf = j.at("idf").get<std::vector<double>>();
    b.coefficients = j.at("coefficients").get<std::vector<std::vector<double>>>();
    b.intercepts = j.at("intercepts").get<std::vector<double>>();
    const auto& meta = j.at("metadata");
    b.project_name = meta.at("project_name").get<std::string>();
    b.batch_index = meta.at("batch_index").get<int>();
    b.created_at = meta.at("created_at").get<std::string>();
    b.tokenizer = meta.value("tokenizer", std::string(kTokenizerName));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed model.json: ") + e.what());
  }
  if (b.idf.size() != b.vocabulary.size())
    throw Error(ErrorCode::invalid_argument, "idf length differs from vocabulary length");
  if (b.coefficients.size() != b.classes.size() || b.intercepts.size() != b.classes.size())
    throw Error(ErrorCode::invalid_argument, "coefficient rows differ from class count");
  for (const auto& row : b.coefficients)
    if (row.size() != b.vocabulary.size())
      throw Error(ErrorCode::invalid_argument, "coefficient row length differs from vocabulary length");
  return b;
}

std::string export_model_bundle(const ProjectState& state) {
  auto bundle = make_model_bundle(state);
  return zip::write_archive({
      {"model.json", model_json(bundle).dump()},
      {"vectorizer.json", vectorizer_json(bundle).dump()},
      {"README.md", generate_readme(state)},
  });
}

std::string generate_readme(const ProjectState& state) {
  std::ostringstream md;
  md << "# " << state.project.name << " - exported model\n\n";
  md << "Classifier and vectorizer exported from the labeling project \"" << state.project.name << "\".\n";
  if (!state.snapshots.empty()) {
    const auto& s = state.snapshots.back();
    md << "The model was trained on " << s.training_size << " labeled records after batch " << s.batch_index
       << " (cross-validated accuracy " << std::fixed << std::setprecision(4) << s.metrics.accuracy
       << ", macro F1 " << s.metrics.macro_f1 << ").\n";
  }
  md << R"(
## Files

- `model.json`: multinomial logistic regression.
  - `classes`: label names; position `c` is class index `c`.
  - `vocabulary`: tokens; position `j` is feature index `j`.
  - `idf`: inverse document frequency weight of each vocabulary token.
  - `coefficients`: one row per class, one column per feature.
  - `intercepts`: one value per class.
  - `metadata`: project name, batch index, creation time and tokenizer name.
- `vectorizer.json`: the same `tokens` and `idf` arrays with the tokenizer name
  `unicode_alnum_min2_lower`, for scoring without the classifier.
- `README.md`: this file.

## Scoring procedure

Scoring a new text is four steps. Every implementation that follows them
reproduces the service's probabilities up to floating point rounding.

1. **Tokenize.** Decode the text as UTF-8. Split it into maximal runs of
   alphanumeric code points, where a code point is alphanumeric when it has
   the Unicode `Alphabetic` property or general category `Nd`, `Nl` or `No`.
   Every other code point (spaces, punctuation, `_`, `-`) ends a run. Map each
   code point to lowercase with the simple Unicode case mapping. Keep runs of
   two or more code points; duplicates are kept.
2. **Tf-idf vector.** Start from a zero vector `x` with one entry per
   vocabulary token. For each token found in `vocabulary` at index `j`, add
   `idf[j]` to `x[j]`. Tokens outside the vocabulary are ignored. Divide `x` by
   its Euclidean norm unless the norm is zero.
3. **Linear scores.** For each class `c`:
   `score[c] = intercepts[c] + sum over j of coefficients[c][j] * x[j]`.
4. **Softmax.** With `m = max over c of score[c]`:
   `p[c] = exp(score[c] - m) / sum over k of exp(score[k] - m)`.
   The predicted label is `classes[argmax p]`.

```
function score(text):
    x = zeros(length(vocabulary))
    for token in tokenize(text):
        if token in vocabulary:
            j = index of token in vocabulary
            x[j] = x[j] + idf[j]
    n = sqrt(sum of x[j]^2)
    if n > 0: x = x / n
    for c in 0 .. length(classes) - 1:
        s[c] = intercepts[c] + dot(coefficients[c], x)
    m = max(s)
    p = [exp(s[c] - m) for each c]
    return p / sum(p)
```

The idf weights were fitted once over every record in the project as
`ln((1 + N) / (1 + df)) + 1`, where `N` is the number of records and `df` the
number of records containing the token. Do not refit them on new data.
)";
  return md.str();
}

}  // namespace labelforge
