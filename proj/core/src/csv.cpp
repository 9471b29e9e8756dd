#include "labelforge/csv.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "labelforge/error.hpp"

namespace labelforge {

bool is_valid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  const auto n = bytes.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(bytes[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(bytes[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

std::vector<std::vector<std::string>> read_csv(std::string_view bytes) {
  if (bytes.substr(0, 3) == "\xEF\xBB\xBF") bytes.remove_prefix(3);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false, field_quoted = false, row_has_content = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  auto end_row = [&] {
    end_field();
    // Blank lines are skipped.
    if (row_has_content || row.size() > 1 || !row.front().empty()) rows.push_back(std::move(row));
    row.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < bytes.size(); ++i) {
    char c = bytes[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < bytes.size() && bytes[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty() && !field_quoted) {
          in_quotes = field_quoted = row_has_content = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        row_has_content = true;
        end_field();
        break;
      case '\r':
        if (i + 1 < bytes.size() && bytes[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::invalid_argument, "unterminated quoted field");
  if (!field.empty() || !row.empty() || row_has_content) end_row();
  return rows;
}

void append_csv_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    const auto& f = fields[i];
    bool quote = f.find_first_of(",\"\r\n") != std::string::npos ||
                 (!f.empty() && (f.front() == ' ' || f.back() == ' '));
    if (!quote) {
      out += f;
      continue;
    }
    out.push_back('"');
    for (char c : f) {
      if (c == '"') out.push_back('"');
      out.push_back(c);
    }
    out.push_back('"');
  }
  out += "\r\n";
}

std::size_t UploadResult::count(std::string_view kind) const {
  return static_cast<std::size_t>(
      std::count_if(issues.begin(), issues.end(), [&](const IngestIssue& i) { return i.kind == kind; }));
}

namespace {

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

UploadResult parse_upload(std::string_view csv_bytes, const std::vector<std::string>& declared_labels) {
  if (!is_valid_utf8(csv_bytes)) throw Error(ErrorCode::invalid_argument, "upload is not valid UTF-8");
  auto table = read_csv(csv_bytes);
  if (table.empty()) throw Error(ErrorCode::invalid_argument, "missing Text column");

  int id_col = -1, text_col = -1, label_col = -1;
  for (std::size_t c = 0; c < table[0].size(); ++c) {
    auto name = trim(table[0][c]);
    int* slot = name == "ID" ? &id_col : name == "Text" ? &text_col : name == "Label" ? &label_col : nullptr;
    if (!slot) throw Error(ErrorCode::invalid_argument, "unexpected column '" + name + "'");
    if (*slot >= 0) throw Error(ErrorCode::invalid_argument, "duplicate column '" + name + "'");
    *slot = static_cast<int>(c);
  }
  if (text_col < 0) throw Error(ErrorCode::invalid_argument, "missing Text column");

  const std::set<std::string> labels(declared_labels.begin(), declared_labels.end());
  std::unordered_set<std::string> seen_text, seen_ids;
  UploadResult out;
  const auto width = table[0].size();
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& fields = table[r];
    auto issue = [&](std::string kind, std::string msg) { out.issues.push_back({r, std::move(kind), std::move(msg)}); };
    if (fields.size() != width) {
      issue("malformed_row", "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
      continue;
    }
    UploadRow row;
    row.text = trim(fields[static_cast<std::size_t>(text_col)]);
    if (id_col >= 0) {
      auto id = trim(fields[static_cast<std::size_t>(id_col)]);
      if (!id.empty()) row.external_id = std::move(id);
    }
    if (label_col >= 0) {
      auto label = trim(fields[static_cast<std::size_t>(label_col)]);
      if (!label.empty()) row.pre_label = std::move(label);
    }

    if (row.text.empty()) {
      issue("empty_text", "empty text");
      continue;
    }
    if (row.pre_label && !labels.count(*row.pre_label)) {
      issue("unknown_label", "unknown label '" + *row.pre_label + "'");
      continue;
    }
    if (row.external_id && seen_ids.count(*row.external_id)) {
      issue("duplicate_id", "duplicate ID '" + *row.external_id + "'");
      continue;
    }
    if (!seen_text.insert(row.text).second) {
      issue("duplicate_text", "duplicate text dropped");
      continue;
    }
    if (row.external_id) seen_ids.insert(*row.external_id);
    row.upload_order = out.rows.size();
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace labelforge
