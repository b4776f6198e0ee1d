#include "pfs/config.hpp"

#include <charconv>

namespace pfs::config {

namespace {

const std::string& require_string(const Json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw ConfigError(ConfigErrc::MissingField, key, where + "missing required key \"" + key + "\"");
  }
  if (!it->is_string()) {
    throw ConfigError(ConfigErrc::Type, key, where + "\"" + key + "\" must be a string");
  }
  return it->get_ref<const std::string&>();
}

int port_value(const Json& v, const char* key, const std::string& where) {
  if (!v.is_number_integer()) {
    throw ConfigError(ConfigErrc::Type, key, where + "\"" + key + "\" must be an integer");
  }
  const auto n = v.get<std::int64_t>();
  if (n < 0 || n > 65535) {
    throw ConfigError(ConfigErrc::Range, key, where + "\"" + key + "\" out of port range");
  }
  return static_cast<int>(n);
}

int require_port(const Json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw ConfigError(ConfigErrc::MissingField, key, where + "missing required key \"" + key + "\"");
  }
  return port_value(*it, key, where);
}

Json leftovers(const Json& obj, std::initializer_list<const char*> known) {
  Json extra = Json::object();
  for (const auto& [k, v] : obj.items()) {
    bool is_known = false;
    for (const char* name : known) is_known = is_known || k == name;
    if (!is_known) extra[k] = v;
  }
  return extra;
}

ServerEndpoint parse_server(const Json& obj, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(ConfigErrc::Type, "server", where + "\"server\" must be an object");
  ServerEndpoint s;
  s.serverhost = require_string(obj, "serverhost", where);
  s.serverport = require_port(obj, "serverport", where);
  s.feature = require_string(obj, "feature", where);
  if (const auto it = obj.find("serverudpport"); it != obj.end()) {
    s.serverudpport = port_value(*it, "serverudpport", where);
  }
  s.extra = leftovers(obj, {"serverhost", "serverport", "feature", "serverudpport"});
  return s;
}

Mapping parse_mapping(const Json& obj, std::size_t index) {
  const std::string where = "mappings[" + std::to_string(index) + "]: ";
  if (!obj.is_object()) throw ConfigError(ConfigErrc::Type, "mappings", where + "mapping must be an object");
  Mapping m;
  m.domain = require_string(obj, "domain", where);
  if (const auto it = obj.find("punycode"); it != obj.end()) {
    if (!it->is_string()) throw ConfigError(ConfigErrc::Type, "punycode", where + "\"punycode\" must be a string");
    m.punycode = it->get<std::string>();
  }
  m.servicehost = require_string(obj, "servicehost", where);
  m.serviceport = require_port(obj, "serviceport", where);
  const auto server = obj.find("server");
  if (server == obj.end()) throw ConfigError(ConfigErrc::MissingField, "server", where + "missing required key \"server\"");
  m.server = parse_server(*server, where);
  m.extra = leftovers(obj, {"domain", "punycode", "servicehost", "serviceport", "server"});
  return m;
}

bool valid_port(int p) { return p >= 1 && p <= 65535; }

void merge_extra(Json& out, const Json& extra) {
  for (const auto& [k, v] : extra.items()) out[k] = v;
}

Json server_json(const ServerEndpoint& s) {
  Json j = Json::object();
  j["serverhost"] = s.serverhost;
  j["serverport"] = s.serverport;
  j["feature"] = s.feature;
  if (s.serverudpport != 0) j["serverudpport"] = s.serverudpport;
  merge_extra(j, s.extra);
  return j;
}

Json mapping_json(const Mapping& m) {
  Json j = Json::object();
  j["domain"] = m.domain;
  if (!m.punycode.empty()) j["punycode"] = m.punycode;
  j["servicehost"] = m.servicehost;
  j["serviceport"] = m.serviceport;
  j["server"] = server_json(m.server);
  merge_extra(j, m.extra);
  return j;
}

struct PathRef {
  bool top_phsl = false;
  std::size_t index = 0;
  bool in_server = false;
  std::string leaf;
};

PathRef parse_path(const ForwardingConfig& config, std::string_view path) {
  const auto fail = [&] {
    return ConfigError(ConfigErrc::UnknownField, std::string(path),
                       "unknown config field \"" + std::string(path) + "\"");
  };
  PathRef ref;
  if (path == "phsl") {
    ref.top_phsl = true;
    return ref;
  }
  constexpr std::string_view kPrefix = "mappings[";
  if (!path.starts_with(kPrefix)) throw fail();
  path.remove_prefix(kPrefix.size());
  const auto close = path.find("].");
  if (close == std::string_view::npos) throw fail();
  const auto [ptr, ec] = std::from_chars(path.data(), path.data() + close, ref.index);
  if (ec != std::errc() || ptr != path.data() + close) throw fail();
  if (ref.index >= config.mappings.size()) {
    throw ConfigError(ConfigErrc::Range, std::string(path), "mapping index out of range");
  }
  path.remove_prefix(close + 2);
  if (path.starts_with("server.")) {
    ref.in_server = true;
    path.remove_prefix(7);
  }
  ref.leaf = std::string(path);
  return ref;
}

}  // namespace

ForwardingConfig parse_config(std::string_view text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(ConfigErrc::Syntax, "", std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError(ConfigErrc::Syntax, "", "configuration must be a JSON object");

  ForwardingConfig config;
  config.phsl = require_string(root, "phsl", "");
  const auto mappings = root.find("mappings");
  if (mappings == root.end()) throw ConfigError(ConfigErrc::MissingField, "mappings", "missing required key \"mappings\"");
  if (!mappings->is_array()) throw ConfigError(ConfigErrc::Type, "mappings", "\"mappings\" must be an array");
  for (std::size_t i = 0; i < mappings->size(); ++i) config.mappings.push_back(parse_mapping((*mappings)[i], i));
  config.extra = leftovers(root, {"phsl", "mappings"});
  return config;
}

std::string serialize_config(const ForwardingConfig& config) {
  Json j = Json::object();
  j["phsl"] = config.phsl;
  j["mappings"] = Json::array();
  for (const auto& m : config.mappings) j["mappings"].push_back(mapping_json(m));
  merge_extra(j, config.extra);
  return j.dump(2);
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Phsl: return "Phsl";
    case ViolationKind::Range: return "Range";
    case ViolationKind::Feature: return "Feature";
    case ViolationKind::EmptyDomain: return "EmptyDomain";
    case ViolationKind::EmptyHost: return "EmptyHost";
    case ViolationKind::NoMappings: return "NoMappings";
  }
  return "Unknown";
}

HostPort split_host_port(std::string_view text) {
  HostPort hp;
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    hp.host = std::string(text);
    return hp;
  }
  hp.host = std::string(text.substr(0, colon));
  const auto digits = text.substr(colon + 1);
  int port = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty()) hp.port = port;
  return hp;
}

std::vector<Violation> validate_config(const ForwardingConfig& config) {
  std::vector<Violation> out;
  const HostPort phsl = split_host_port(config.phsl);
  if (phsl.host.empty() || !valid_port(phsl.port)) {
    out.push_back({ViolationKind::Phsl, "phsl", "phsl must be host:port with port in [1, 65535]"});
  }
  if (config.mappings.empty()) {
    out.push_back({ViolationKind::NoMappings, "mappings", "at least one mapping is required"});
  }
  for (std::size_t i = 0; i < config.mappings.size(); ++i) {
    const Mapping& m = config.mappings[i];
    const std::string at = "mappings[" + std::to_string(i) + "].";
    if (m.domain.empty()) out.push_back({ViolationKind::EmptyDomain, at + "domain", "domain is empty"});
    if (m.servicehost.empty()) out.push_back({ViolationKind::EmptyHost, at + "servicehost", "servicehost is empty"});
    if (!valid_port(m.serviceport)) out.push_back({ViolationKind::Range, at + "serviceport", "serviceport out of range"});
    if (m.server.serverhost.empty()) {
      out.push_back({ViolationKind::EmptyHost, at + "server.serverhost", "serverhost is empty"});
    }
    if (!valid_port(m.server.serverport)) {
      out.push_back({ViolationKind::Range, at + "server.serverport", "serverport out of range"});
    }
    // serverudpport 0 means "not provided".
    if (m.server.serverudpport < 0 || m.server.serverudpport > 65535) {
      out.push_back({ViolationKind::Range, at + "server.serverudpport", "serverudpport out of range"});
    }

    bool any = false;
    bool bad = false;
    std::string_view rest = m.server.feature;
    while (true) {
      const auto comma = rest.find(',');
      std::string_view token = rest.substr(0, comma);
      while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
      while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
      if (token == "tcp" || token == "udp") {
        any = true;
      } else {
        bad = true;
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!any || bad) {
      out.push_back({ViolationKind::Feature, at + "server.feature", "feature must list tcp and/or udp"});
    }
  }
  return out;
}

void set_field(ForwardingConfig& config, std::string_view path, const Json& value) {
  const PathRef ref = parse_path(config, path);
  const std::string p(path);
  const auto str = [&]() {
    if (!value.is_string()) throw ConfigError(ConfigErrc::Type, p, p + " expects a string");
    return value.get<std::string>();
  };
  const auto port = [&]() { return port_value(value, ref.leaf.c_str(), ""); };
  if (ref.top_phsl) {
    config.phsl = str();
    return;
  }
  Mapping& m = config.mappings[ref.index];
  if (ref.in_server) {
    ServerEndpoint& s = m.server;
    if (ref.leaf == "serverhost") s.serverhost = str();
    else if (ref.leaf == "serverport") s.serverport = port();
    else if (ref.leaf == "feature") s.feature = str();
    else if (ref.leaf == "serverudpport") s.serverudpport = port();
    else throw ConfigError(ConfigErrc::UnknownField, p, "unknown config field \"" + p + "\"");
    return;
  }
  if (ref.leaf == "domain") m.domain = str();
  else if (ref.leaf == "punycode") m.punycode = str();
  else if (ref.leaf == "servicehost") m.servicehost = str();
  else if (ref.leaf == "serviceport") m.serviceport = port();
  else throw ConfigError(ConfigErrc::UnknownField, p, "unknown config field \"" + p + "\"");
}

Json get_field(const ForwardingConfig& config, std::string_view path) {
  const PathRef ref = parse_path(config, path);
  const std::string p(path);
  if (ref.top_phsl) return config.phsl;
  const Mapping& m = config.mappings[ref.index];
  if (ref.in_server) {
    const ServerEndpoint& s = m.server;
    if (ref.leaf == "serverhost") return s.serverhost;
    if (ref.leaf == "serverport") return s.serverport;
    if (ref.leaf == "feature") return s.feature;
    if (ref.leaf == "serverudpport") return s.serverudpport;
    throw ConfigError(ConfigErrc::UnknownField, p, "unknown config field \"" + p + "\"");
  }
  if (ref.leaf == "domain") return m.domain;
  if (ref.leaf == "punycode") return m.punycode;
  if (ref.leaf == "servicehost") return m.servicehost;
  if (ref.leaf == "serviceport") return m.serviceport;
  throw ConfigError(ConfigErrc::UnknownField, p, "unknown config field \"" + p + "\"");
}

}  // namespace pfs::config
