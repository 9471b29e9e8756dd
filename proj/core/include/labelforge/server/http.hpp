#pragma once

#include <map>
#include <string>
#include <vector>

namespace labelforge::server {

struct FilePart {
  std::string filename;
  std::string content_type;
  std::string content;
};

// Transport-neutral request. Header names are lower-case.
struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;
  std::string body;
  std::map<std::string, FilePart> files;  // multipart/form-data parts by field name
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

}  // namespace labelforge::server
