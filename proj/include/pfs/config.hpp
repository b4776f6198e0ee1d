#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pfs/error.hpp"

namespace pfs::config {

using Json = nlohmann::ordered_json;

enum class ConfigErrc { Syntax, MissingField, Range, Type, UnknownField };

class ConfigError : public BasicError<ConfigErrc> {
 public:
  ConfigError(ConfigErrc code, std::string field, const std::string& what)
      : BasicError(code, what), field_(std::move(field)) {}

  // Name of the offending key, empty for syntax errors.
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ServerEndpoint {
  std::string serverhost;
  int serverport = 0;
  std::string feature;
  int serverudpport = 0;
  Json extra = Json::object();

  bool operator==(const ServerEndpoint&) const = default;
};

struct Mapping {
  std::string domain;
  std::string punycode;
  std::string servicehost;
  int serviceport = 0;
  ServerEndpoint server;
  Json extra = Json::object();

  bool operator==(const Mapping&) const = default;
};

struct ForwardingConfig {
  std::string phsl;
  std::vector<Mapping> mappings;
  Json extra = Json::object();

  bool operator==(const ForwardingConfig&) const = default;
};

// Parses the control server's forwarding configuration. Unknown keys are
// kept in `extra` and written back by serialize_config.
ForwardingConfig parse_config(std::string_view text);

std::string serialize_config(const ForwardingConfig& config);

enum class ViolationKind { Phsl, Range, Feature, EmptyDomain, EmptyHost, NoMappings };

struct Violation {
  ViolationKind kind;
  std::string field;
  std::string message;
};

const char* to_string(ViolationKind kind);

std::vector<Violation> validate_config(const ForwardingConfig& config);

struct HostPort {
  std::string host;
  int port = 0;
};

// Splits "host:port". Returns port 0 when the port is missing or malformed.
HostPort split_host_port(std::string_view text);

// Writes one field addressed by a path such as "phsl",
// "mappings[0].servicehost" or "mappings[1].server.serverport".
// Throws ConfigError(UnknownField) for paths outside the model.
void set_field(ForwardingConfig& config, std::string_view path, const Json& value);

// Reads the same paths as set_field.
Json get_field(const ForwardingConfig& config, std::string_view path);

}  // namespace pfs::config
