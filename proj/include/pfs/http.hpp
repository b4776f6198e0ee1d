#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pfs/bytes.hpp"

// Minimal HTTP/1.1 subset used inside the simulator: request/status line,
// headers, and a Content-Length delimited body. No chunking, no pipelining.
namespace pfs::http {

using Headers = std::vector<std::pair<std::string, std::string>>;

struct Request {
  std::string method = "GET";
  std::string target = "/";
  std::string version = "HTTP/1.1";
  Headers headers;
  std::string body;

  bool operator==(const Request&) const = default;
};

struct Response {
  int status = 200;
  std::string reason = "OK";
  std::string version = "HTTP/1.1";
  Headers headers;
  std::string body;

  bool operator==(const Response&) const = default;
};

std::optional<std::string> header(const Headers& headers, std::string_view name);
void set_header(Headers& headers, std::string_view name, std::string value);
void remove_header(Headers& headers, std::string_view name);

// Parsers return nullopt for anything that is not a complete message.
std::optional<Request> parse_request(std::string_view text);
std::optional<Response> parse_response(std::string_view text);

// Serializers emit headers verbatim and in order. Callers own Content-Length;
// make_response sets it.
std::string serialize(const Request& req);
std::string serialize(const Response& resp);

Response make_response(int status, std::string reason, std::string body,
                       Headers extra = {});

// Host header without any ":port" suffix, lowercased.
std::string request_host(const Request& req);

std::string base64_encode(std::string_view in);

}  // namespace pfs::http
