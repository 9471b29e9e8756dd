#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "labelforge/domain.hpp"

namespace labelforge {

// RFC 4180 reader: comma separated, double-quote quoting with "" escapes,
// LF or CRLF line endings, optional UTF-8 byte order mark. Throws
// Error(invalid_argument) on an unterminated quote.
std::vector<std::vector<std::string>> read_csv(std::string_view bytes);

// Quotes only fields that need it; CRLF line endings.
void append_csv_row(std::string& out, const std::vector<std::string>& fields);

bool is_valid_utf8(std::string_view bytes);

struct IngestIssue {
  std::size_t line = 0;  // 1-based data line, header excluded
  std::string kind;      // empty_text | unknown_label | duplicate_text | duplicate_id | malformed_row
  std::string message;
};

struct UploadResult {
  std::vector<UploadRow> rows;  // accepted rows, upload_order = position
  std::vector<IngestIssue> issues;

  std::size_t count(std::string_view kind) const;
};

// Header row over {ID, Text, Label} with Text mandatory. Texts are trimmed;
// rows with empty text, an unknown label, a repeated ID or a text byte-equal
// to an earlier one are excluded and reported. A missing Text column, an
// unexpected column or invalid UTF-8 is fatal (Error(invalid_argument)).
UploadResult parse_upload(std::string_view csv_bytes, const std::vector<std::string>& declared_labels);

}  // namespace labelforge
