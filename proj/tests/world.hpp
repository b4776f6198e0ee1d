#pragma once

#include <memory>
#include <string>

#include "pfs/agent.hpp"
#include "pfs/config.hpp"
#include "pfs/server.hpp"
#include "pfs/services.hpp"
#include "pfs/simnet.hpp"

// Small end-to-end topology shared by the server, agent and attack tests:
// an internal web service, a co-located secret service, a control server,
// the PFS server, one agent and one visitor.
namespace testing_support {

inline constexpr const char* kOraySampleText = R"({
"phsl": "XX.oray.net:6061",
"mappings": [
  {
    "domain": "XX.xicp.fun",
    "punycode": "XX.xicp.fun",
    "servicehost": "127.0.0.1",
    "serviceport": 8001,
    "server": {
      "serverhost": "phfw-overseasvip.oray.net",
      "serverport": 6061,
      "feature": "tcp,udp",
      "serverudpport": 6061
    }
  }
]
})";

inline pfs::config::ForwardingConfig oray_sample() { return pfs::config::parse_config(kOraySampleText); }

struct World {
  std::unique_ptr<pfs::sim::SimNet> net;
  std::shared_ptr<pfs::services::HttpService> web;
  std::shared_ptr<pfs::services::HttpService> web2;
  std::shared_ptr<pfs::services::HttpService> secret;
  std::shared_ptr<pfs::services::ControlServer> control;
  std::shared_ptr<pfs::server::PfsServer> server;
  std::shared_ptr<pfs::agent::PfsAgent> agent;
  std::shared_ptr<pfs::services::Visitor> visitor;

  pfs::sim::SimNet& n() { return *net; }
};

struct WorldOptions {
  pfs::server::ProviderStyle style = pfs::server::ProviderStyle::OrayStyle;
  std::uint64_t seed = 7;
  bool require_confirmation = false;
  pfs::agent::AgentOptions agent;  // style, ids and endpoints are filled in
  pfs::config::ForwardingConfig config = oray_sample();
};

inline World make_world(WorldOptions o) {
  using namespace pfs;
  World w;
  w.net = std::make_unique<sim::SimNet>(sim::SimOptions{o.seed, 1'000'000, sim::ViolationPolicy::Record, 0.0});
  sim::SimNet& net = *w.net;

  w.web = services::HttpService::fixed("web", 200, "OK");
  net.add_node("web", {"127.0.0.1"});
  net.bind("127.0.0.1:8001", "web");
  net.set_behavior("web", w.web);
  w.web2 = services::HttpService::fixed("web2", 200, "EIGHT-THOUSAND-TWO");
  net.add_node("web2", {"127.0.0.2"});
  net.bind("127.0.0.1:8002", "web2");
  net.set_behavior("web2", w.web2);
  w.secret = services::HttpService::fixed("secret", 200, "SECRET");
  net.add_node("secret", {"10.0.0.7"});
  net.bind("10.0.0.7:8080", "secret");
  net.set_behavior("secret", w.secret);

  w.control = std::make_shared<services::ControlServer>("control", config::serialize_config(o.config));
  net.add_node("control", {"203.0.113.10"});
  net.bind("hsk-embed.oray.net:443", "control");
  net.bind("xx.oray.net:6061", "control");
  net.set_behavior("control", w.control);

  server::ServerOptions so;
  so.apex = "xicp.fun";
  so.seed = o.seed;
  so.require_confirmation = o.require_confirmation;
  w.server = std::make_shared<server::PfsServer>("pfs", so);
  w.server->add_agent("agent-1", "token-1");
  net.add_node("pfs", {"203.0.113.20"});
  for (const char* ep : {"phfw-overseasvip.oray.net:6061", "tunnel.xicp.fun:4443", "*.xicp.fun:80", "*.xicp.fun:443"}) {
    net.bind(ep, "pfs");
  }
  net.set_behavior("pfs", w.server);

  agent::AgentOptions ao = o.agent;
  ao.agent_id = "agent-1";
  ao.token = "token-1";
  ao.style = o.style;
  ao.control_endpoint = "hsk-embed.oray.net:443";
  ao.tunnel_endpoint = "tunnel.xicp.fun:4443";
  if (ao.tee) w.server->trust_tee(ao.tee->public_key());
  w.agent = std::make_shared<agent::PfsAgent>("agent", ao);
  net.add_node("agent", {"192.0.2.44"});
  net.set_behavior("agent", w.agent);
  if (o.style == server::ProviderStyle::NgrokStyle) w.agent->set_local_config(o.config);

  w.visitor = std::make_shared<services::Visitor>("visitor");
  net.add_node("visitor", {"198.51.100.7"});
  net.set_behavior("visitor", w.visitor);
  return w;
}

inline pfs::http::Request get(std::string path = "/") {
  pfs::http::Request r;
  r.target = std::move(path);
  return r;
}

// Visits host and runs the network for `settle` simulated seconds.
inline std::optional<pfs::http::Response> visit_and_wait(World& w, const std::string& host,
                                                          pfs::http::Request req = get(), bool https = false,
                                                          double settle = 1.0) {
  const std::size_t i = w.visitor->visit(w.n(), host, std::move(req), https);
  w.n().run_until(w.n().now() + pfs::sim::seconds(settle));
  return w.visitor->response(i);
}

inline std::size_t count_events(const pfs::sim::EventTrace& t, std::string_view kind, std::string_view label = {}) {
  std::size_t n = 0;
  for (const auto& e : t) {
    if (e.kind == kind && (label.empty() || e.label == label)) ++n;
  }
  return n;
}

}  // namespace testing_support
