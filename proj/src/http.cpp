#include "pfs/http.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <sodium.h>

namespace pfs::http {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

// Splits head from body and parses header lines. Returns false on malformed input.
bool split_message(std::string_view text, std::string_view& first_line, Headers& headers,
                   std::string& body) {
  const auto head_end = text.find("\r\n\r\n");
  if (head_end == std::string_view::npos) return false;
  std::string_view head = text.substr(0, head_end);
  std::string_view rest = text.substr(head_end + 4);

  auto eol = head.find("\r\n");
  first_line = head.substr(0, eol);
  head = eol == std::string_view::npos ? std::string_view{} : head.substr(eol + 2);
  while (!head.empty()) {
    eol = head.find("\r\n");
    const std::string_view line = head.substr(0, eol);
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) return false;
    std::string_view value = line.substr(colon + 1);
    while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    while (!value.empty() && value.back() == ' ') value.remove_suffix(1);
    headers.emplace_back(std::string(line.substr(0, colon)), std::string(value));
    head = eol == std::string_view::npos ? std::string_view{} : head.substr(eol + 2);
  }

  std::size_t length = 0;
  if (const auto cl = header(headers, "Content-Length")) {
    const auto [ptr, ec] = std::from_chars(cl->data(), cl->data() + cl->size(), length);
    if (ec != std::errc() || ptr != cl->data() + cl->size()) return false;
  }
  if (rest.size() < length) return false;
  body = std::string(rest.substr(0, length));
  return true;
}

void write_headers(std::string& out, const Headers& headers) {
  for (const auto& [k, v] : headers) {
    out += k;
    out += ": ";
    out += v;
    out += "\r\n";
  }
  out += "\r\n";
}

}  // namespace

std::optional<std::string> header(const Headers& headers, std::string_view name) {
  for (const auto& [k, v] : headers) {
    if (iequals(k, name)) return v;
  }
  return std::nullopt;
}

void set_header(Headers& headers, std::string_view name, std::string value) {
  for (auto& [k, v] : headers) {
    if (iequals(k, name)) {
      v = std::move(value);
      return;
    }
  }
  headers.emplace_back(std::string(name), std::move(value));
}

void remove_header(Headers& headers, std::string_view name) {
  std::erase_if(headers, [&](const auto& kv) { return iequals(kv.first, name); });
}

std::optional<Request> parse_request(std::string_view text) {
  Request req;
  std::string_view line;
  if (!split_message(text, line, req.headers, req.body)) return std::nullopt;
  const auto sp1 = line.find(' ');
  const auto sp2 = line.rfind(' ');
  if (sp1 == std::string_view::npos || sp1 == sp2) return std::nullopt;
  req.method = std::string(line.substr(0, sp1));
  req.target = std::string(line.substr(sp1 + 1, sp2 - sp1 - 1));
  req.version = std::string(line.substr(sp2 + 1));
  if (req.method.empty() || req.target.empty() || !req.version.starts_with("HTTP/")) return std::nullopt;
  return req;
}

std::optional<Response> parse_response(std::string_view text) {
  Response resp;
  std::string_view line;
  if (!split_message(text, line, resp.headers, resp.body)) return std::nullopt;
  const auto sp1 = line.find(' ');
  if (sp1 == std::string_view::npos) return std::nullopt;
  resp.version = std::string(line.substr(0, sp1));
  if (!resp.version.starts_with("HTTP/")) return std::nullopt;
  std::string_view rest = line.substr(sp1 + 1);
  const auto sp2 = rest.find(' ');
  const std::string_view code = rest.substr(0, sp2);
  const auto [ptr, ec] = std::from_chars(code.data(), code.data() + code.size(), resp.status);
  if (ec != std::errc() || ptr != code.data() + code.size() || code.size() != 3) return std::nullopt;
  resp.reason = sp2 == std::string_view::npos ? std::string() : std::string(rest.substr(sp2 + 1));
  return resp;
}

std::string serialize(const Request& req) {
  std::string out = req.method + " " + req.target + " " + req.version + "\r\n";
  write_headers(out, req.headers);
  out += req.body;
  return out;
}

std::string serialize(const Response& resp) {
  std::string out = resp.version + " " + std::to_string(resp.status) + " " + resp.reason + "\r\n";
  write_headers(out, resp.headers);
  out += resp.body;
  return out;
}

Response make_response(int status, std::string reason, std::string body, Headers extra) {
  Response r;
  r.status = status;
  r.reason = std::move(reason);
  r.headers = std::move(extra);
  set_header(r.headers, "Content-Length", std::to_string(body.size()));
  r.body = std::move(body);
  return r;
}

std::string request_host(const Request& req) {
  std::string host = header(req.headers, "Host").value_or("");
  // Bracketed IPv6 literals keep their colons.
  if (!host.empty() && host.front() != '[') {
    if (const auto colon = host.rfind(':'); colon != std::string::npos) host.resize(colon);
  }
  std::transform(host.begin(), host.end(), host.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return host;
}

std::string base64_encode(std::string_view in) {
  std::string out(sodium_base64_ENCODED_LEN(in.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(in.data()), in.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::char_traits<char>::length(out.c_str()));
  return out;
}

}  // namespace pfs::http
