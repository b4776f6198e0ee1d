#include "demos.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "pfs/agent.hpp"
#include "pfs/measure.hpp"
#include "pfs/server.hpp"
#include "pfs/services.hpp"

using namespace pfs;

namespace {

constexpr const char* kAgentId = "cli-agent";
constexpr const char* kToken = "cli-token";

std::string stamp(sim::SimTime t) {
  std::ostringstream out;
  out << "[" << std::fixed << std::setprecision(3) << std::setw(8) << sim::to_seconds(t) << "s] ";
  return out.str();
}

void print_notes(const sim::EventTrace& trace) {
  for (const sim::TraceEvent& ev : trace) {
    if (ev.kind != "note" && ev.kind != "violation") continue;
    std::cout << stamp(ev.time) << ev.sender << ": " << ev.label;
    if (!ev.summary.empty()) std::cout << " (" << ev.summary << ")";
    std::cout << "\n";
  }
}

void print_visit(const services::Visitor& v, std::size_t i) {
  const services::Visit& visit = v.visits()[i];
  std::cout << "visit http://" << visit.host << "/\n";
  if (visit.unreachable) {
    std::cout << "  unreachable\n";
  } else if (visit.response) {
    std::istringstream lines(*visit.response);
    for (std::string line; std::getline(lines, line);) std::cout << "  | " << line << "\n";
  } else {
    std::cout << "  connection closed without a response\n";
  }
}

bool finish(sim::SimNet& net, const std::optional<std::string>& trace_path) {
  if (trace_path && !write_trace(*trace_path, sim::to_jsonl(net.trace()))) {
    std::cerr << "cannot write " << *trace_path << "\n";
    return false;
  }
  return true;
}

std::pair<std::string, std::string> split_credentials(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) return {s, ""};
  return {s.substr(0, colon), s.substr(colon + 1)};
}

}  // namespace

bool write_trace(const std::string& path, const std::string& jsonl) {
  std::ofstream out(path, std::ios::binary);
  out << jsonl;
  return static_cast<bool>(out);
}

int run_server_demo(const ServerDemoOptions& o) {
  const auto style = server::parse_style(o.style);
  if (!style) {
    std::cerr << "unknown style " << o.style << "\n";
    return 2;
  }
  sim::SimNet net({o.seed, 1'000'000, sim::ViolationPolicy::Record, 0.0});

  auto web = services::HttpService::fixed("web", 200, "hello from the internal service\n");
  net.add_node("web", {"127.0.0.1"});
  net.bind("127.0.0.1:8080", "web");
  net.set_behavior("web", web);

  server::ServerOptions so;
  so.apex = o.apex;
  so.require_confirmation = o.require_confirmation;
  so.seed = o.seed;
  auto srv = std::make_shared<server::PfsServer>("pfs", so);
  srv->add_agent(kAgentId, kToken);
  net.add_node("pfs", {"203.0.113.20"});
  for (const std::string& ep : {"tunnel." + o.apex + ":4443", "tunnel." + o.apex + ":6061", "*." + o.apex + ":80",
                                "*." + o.apex + ":443"}) {
    net.bind(ep, "pfs");
  }
  net.set_behavior("pfs", srv);

  config::ForwardingConfig cfg;
  config::Mapping m;
  m.domain = "demo." + o.apex;
  m.servicehost = "127.0.0.1";
  m.serviceport = 8080;
  m.server = {"tunnel." + o.apex, 6061, "tcp", 0, config::Json::object()};
  cfg.phsl = "update." + o.apex + ":6061";
  cfg.mappings.push_back(m);

  agent::AgentOptions ao;
  ao.agent_id = kAgentId;
  ao.token = kToken;
  ao.style = *style;
  ao.tunnel_endpoint = "tunnel." + o.apex + ":4443";
  ao.control_endpoint = "hsk-embed." + o.apex + ":443";
  if (o.require_confirmation) {
    ao.tee = std::make_shared<mitigation::SimulatedTee>("device-tee", o.seed + 1);
    ao.tee->set_physical_presence(true);
    srv->trust_tee(ao.tee->public_key());
  }
  auto ag = std::make_shared<agent::PfsAgent>("agent", ao);
  net.add_node("agent", {"192.0.2.44"});
  net.set_behavior("agent", ag);
  if (*style == server::ProviderStyle::NgrokStyle) {
    ag->set_local_config(cfg);
  } else {
    auto control = std::make_shared<services::ControlServer>("control", config::serialize_config(cfg));
    net.add_node("control", {"203.0.113.10"});
    net.bind(ao.control_endpoint, "control");
    net.bind(cfg.phsl, "control");
    net.set_behavior("control", control);
  }

  auto visitor = std::make_shared<services::Visitor>("visitor");
  net.add_node("visitor", {"198.51.100.7"});
  net.set_behavior("visitor", visitor);

  std::cout << "server apex " << o.apex << ", " << o.style << " style"
            << (o.require_confirmation ? ", confirmations required" : "") << "\n";
  ag->start(net);
  net.run_until(sim::seconds(1));

  std::cout << "registrations:\n";
  for (const server::PfwRegistration& r : srv->registrations()) {
    std::cout << "  " << r.pfw_domain << " -> " << r.agent_id << " (" << r.mapping.servicehost << ":"
              << r.mapping.serviceport << ")" << (r.confirmation ? " confirmed" : "") << "\n";
    if (const auto ip = measure::decode_origin_ip(r.pfw_domain, o.apex)) {
      std::cout << "    origin IP in name: " << *ip << "\n";
    }
    server::AccessPolicy p;
    if (o.basic_auth) p.basic_auth = split_credentials(*o.basic_auth);
    if (o.ip_block) p.ip_block = {*o.ip_block};
    p.ua_filter = o.ua_filter;
    srv->set_access_policy(r.pfw_domain, p);
  }
  for (const server::Refusal& r : srv->refusals()) {
    std::cout << "  refused " << r.pfw_domain << " at " << mitigation::to_string(r.step) << ": " << r.reason << "\n";
  }

  for (const server::PfwRegistration& r : srv->registrations()) {
    http::Request req;
    req.headers = {{"Host", r.pfw_domain}, {"User-Agent", o.visitor_ua}};
    if (o.visitor_auth) req.headers.emplace_back("Authorization", "Basic " + http::base64_encode(*o.visitor_auth));
    visitor->visit(net, r.pfw_domain, req);
  }
  net.run_until(net.now() + sim::seconds(1));
  for (std::size_t i = 0; i < visitor->visits().size(); ++i) print_visit(*visitor, i);
  std::cout << "events:\n";
  print_notes(net.trace());
  return finish(net, o.trace_path) ? 0 : 1;
}

int run_agent_demo(const AgentDemoOptions& o) {
  const auto style = server::parse_style(o.style);
  if (!style) {
    std::cerr << "unknown style " << o.style << "\n";
    return 2;
  }
  std::ifstream in(o.config_path);
  if (!in) {
    std::cerr << "cannot open " << o.config_path << "\n";
    return 2;
  }
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  config::ForwardingConfig cfg;
  try {
    cfg = config::parse_config(text);
  } catch (const config::ConfigError& e) {
    std::cerr << o.config_path << ": " << e.what() << "\n";
    return 2;
  }
  if (const auto v = config::validate_config(cfg); !v.empty()) {
    for (const config::Violation& x : v) std::cerr << o.config_path << ": " << x.field << ": " << x.message << "\n";
    return 2;
  }

  sim::SimNet net({o.seed, 1'000'000, sim::ViolationPolicy::Record, 0.0});
  server::ServerOptions so;
  so.seed = o.seed;
  auto srv = std::make_shared<server::PfsServer>("pfs", so);
  srv->add_agent(kAgentId, kToken);
  net.add_node("pfs", {"203.0.113.20"});
  net.set_behavior("pfs", srv);

  agent::AgentOptions ao;
  ao.agent_id = kAgentId;
  ao.token = kToken;
  ao.style = *style;
  ao.heartbeat_interval = sim::seconds(o.heartbeat);
  auto ag = std::make_shared<agent::PfsAgent>("agent", ao);
  net.add_node("agent", {"192.0.2.44"});
  net.set_behavior("agent", ag);

  // Every internal service the mappings name gets its own node.
  std::set<std::string> bound;
  std::size_t n = 0;
  for (const config::Mapping& m : cfg.mappings) {
    const std::string ep = m.servicehost + ":" + std::to_string(m.serviceport);
    if (!bound.insert(ep).second) continue;
    const std::string id = "service" + std::to_string(n++);
    net.add_node(id, {m.servicehost});
    net.bind(ep, id);
    net.set_behavior(id, services::HttpService::fixed(id, 200, "internal service at " + ep + "\n"));
  }
  const auto bind_once = [&](const std::string& ep, const std::string& node) {
    if (bound.insert(ep).second) net.bind(ep, node);
  };

  if (*style == server::ProviderStyle::OrayStyle) {
    auto control = std::make_shared<services::ControlServer>("control", text);
    net.add_node("control", {"203.0.113.10"});
    net.set_behavior("control", control);
    bind_once(ao.control_endpoint, "control");
    bind_once(cfg.phsl, "control");
    for (const config::Mapping& m : cfg.mappings) {
      bind_once(m.server.serverhost + ":" + std::to_string(m.server.serverport), "pfs");
      if (m.server.serverudpport != 0) {
        bind_once(m.server.serverhost + ":" + std::to_string(m.server.serverudpport), "pfs");
      }
      bind_once(m.domain + ":80", "pfs");
    }
  } else {
    ag->set_local_config(cfg);
    bind_once(ao.tunnel_endpoint, "pfs");
    bind_once("*." + so.apex + ":80", "pfs");
  }

  auto visitor = std::make_shared<services::Visitor>("visitor");
  net.add_node("visitor", {"198.51.100.7"});
  net.set_behavior("visitor", visitor);

  std::cout << "agent " << o.style << " style, config " << o.config_path << ", " << cfg.mappings.size()
            << " mapping(s)\n";
  ag->start(net);
  net.run_until(sim::seconds(1));
  if (*style == server::ProviderStyle::OrayStyle) {
    for (const config::Mapping& m : cfg.mappings) visitor->visit(net, m.domain, http::Request{});
  } else {
    for (const std::string& d : ag->live_domains()) visitor->visit(net, d, http::Request{});
  }
  net.run_until(net.now() + sim::seconds(std::max(2.0, 2.0 * o.heartbeat)));

  std::cout << "phase " << agent::to_string(ag->state().phase) << ", restarts " << ag->state().restart_count
            << ", config pulls " << ag->config_pulls() << "\n";
  std::size_t heartbeats = 0;
  for (const sim::TraceEvent& ev : net.trace()) {
    if (ev.kind == "send" && ev.label == "heartbeat") ++heartbeats;
  }
  std::cout << "heartbeats sent " << heartbeats << "\n";
  for (std::size_t i = 0; i < visitor->visits().size(); ++i) print_visit(*visitor, i);
  std::cout << "events:\n";
  print_notes(net.trace());
  return finish(net, o.trace_path) ? 0 : 1;
}
