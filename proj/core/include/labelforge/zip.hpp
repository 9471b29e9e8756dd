#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace labelforge::zip {

struct Entry {
  std::string name;
  std::string data;
};

// Deflate-compressed archive. Every entry carries the MS-DOS epoch
// (1980-01-01 00:00:00) as its timestamp, so equal inputs give equal bytes.
std::string write_archive(const std::vector<Entry>& entries);

// Reads stored and deflated entries through the central directory and checks
// CRC-32. Throws Error(invalid_argument) on malformed input.
std::map<std::string, std::string> read_archive(std::string_view bytes);

}  // namespace labelforge::zip
