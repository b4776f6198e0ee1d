#include "pfs/server.hpp"

#include <algorithm>
#include <mutex>
#include <regex>

#include "pfs/wire.hpp"

namespace pfs::server {

using pfs::to_string;

namespace {

using Json = nlohmann::ordered_json;

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string dashed(std::string ip) {
  std::replace(ip.begin(), ip.end(), '.', '-');
  std::replace(ip.begin(), ip.end(), ':', '-');
  return ip;
}

}  // namespace

const char* to_string(ProviderStyle s) { return s == ProviderStyle::NgrokStyle ? "ngrok" : "oray"; }

std::optional<ProviderStyle> parse_style(std::string_view s) {
  if (s == "ngrok") return ProviderStyle::NgrokStyle;
  if (s == "oray") return ProviderStyle::OrayStyle;
  return std::nullopt;
}

const char* to_string(Proto p) { return p == Proto::Https ? "https" : "http"; }

http::Response error_page(int status, std::string_view reason, std::string_view code, std::string_view message) {
  http::Headers h;
  h.emplace_back("Content-Type", "text/plain");
  h.emplace_back("X-PFS-Error-Page", "provider");
  if (!code.empty()) h.emplace_back("X-PFS-Error-Code", std::string(code));
  std::string body;
  if (!code.empty()) {
    body += code;
    body += ' ';
  }
  body += message;
  body += '\n';
  return http::make_response(status, std::string(reason), std::move(body), std::move(h));
}

AccessDecision enforce_access_control(const AccessPolicy& policy, const std::string& visitor_ip,
                                      const std::optional<std::string>& user_agent,
                                      const std::optional<std::string>& auth_header, ProviderStyle style) {
  AccessDecision d;
  const bool ip_denied = (!policy.ip_allow.empty() && !contains(policy.ip_allow, visitor_ip)) ||
                         contains(policy.ip_block, visitor_ip);
  if (ip_denied) {
    if (style == ProviderStyle::OrayStyle) {
      d.kind = AccessDecision::Kind::DropConnection;
      return d;
    }
    d.kind = AccessDecision::Kind::Deny;
    d.status = 403;
    d.error_code = std::string(kErrIpDenied);
    d.response = error_page(403, "Forbidden", kErrIpDenied, "The IP address " + visitor_ip + " is not allowed.");
    return d;
  }
  if (policy.ua_filter) {
    const std::regex re(*policy.ua_filter, std::regex::ECMAScript);
    if (!std::regex_search(user_agent.value_or(""), re)) {
      d.kind = AccessDecision::Kind::Deny;
      d.status = 403;
      d.error_code = std::string(kErrUaDenied);
      d.response = error_page(403, "Forbidden", kErrUaDenied, "The User-Agent is not allowed.");
      return d;
    }
  }
  if (policy.basic_auth) {
    const std::string expected =
        "Basic " + http::base64_encode(policy.basic_auth->first + ":" + policy.basic_auth->second);
    if (!auth_header || *auth_header != expected) {
      d.kind = AccessDecision::Kind::Deny;
      d.status = 401;
      d.response = error_page(401, "Unauthorized", "", "Authentication required.");
      d.response.headers.insert(d.response.headers.begin() + 1, {"WWW-Authenticate", "Basic realm=\"pfs\""});
      return d;
    }
  }
  return d;
}

http::Request ForwardedRequest::to_http() const {
  http::Request r;
  r.method = method;
  r.target = path;
  r.headers = headers;
  r.body = body;
  http::remove_header(r.headers, "X-Forwarded-For");
  http::remove_header(r.headers, "X-Forwarded-Proto");
  r.headers.emplace_back("X-Forwarded-For", x_forwarded_for);
  r.headers.emplace_back("X-Forwarded-Proto", to_string(x_forwarded_proto));
  return r;
}

PfsServer::PfsServer(std::string node_id, ServerOptions options)
    : node_id_(std::move(node_id)),
      options_(std::move(options)),
      rng_(options_.seed),
      verifier_(options_.freshness_window) {}

void PfsServer::add_agent(const std::string& agent_id, const std::string& token) { tokens_[agent_id] = token; }

bool PfsServer::authenticate(const std::string& agent_id, const std::string& token) {
  const auto it = tokens_.find(agent_id);
  if (it == tokens_.end() || it->second != token) return false;
  authenticated_.insert(agent_id);
  return true;
}

std::string PfsServer::random_hex(std::size_t digits) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < digits; ++i) s.push_back(kHex[rng_() & 0xf]);
  return s;
}

std::string PfsServer::assign_domain(const std::string& agent_id, ProviderStyle style, bool free_tier,
                                     const std::optional<std::string>& origin_ip) {
  if (!authenticated_.contains(agent_id)) {
    throw ServerError(ServerErrc::Unauthorized, "agent \"" + agent_id + "\" is not authenticated");
  }
  const bool embed_origin = style == ProviderStyle::NgrokStyle && free_tier;
  if (embed_origin && (!origin_ip || origin_ip->empty())) {
    throw ServerError(ServerErrc::MissingOrigin, "free-tier domain needs the origin IP");
  }
  std::string domain;
  do {
    domain = embed_origin ? random_hex(4) + "-" + dashed(*origin_ip) + "." + options_.apex
                          : random_hex(8) + "." + options_.apex;
  } while (assigned_.contains(domain));
  assigned_.insert(domain);
  return domain;
}

const PfwRegistration& PfsServer::register_pfw(const std::string& agent_id, const config::Mapping& mapping,
                                               const std::optional<mitigation::SignedConfirmation>& confirmation,
                                               ProviderStyle style, std::optional<sim::LinkId> tunnel,
                                               std::int64_t now_seconds) {
  const std::string key = lower(mapping.domain);
  std::unique_lock lock(table_mu_);
  const auto existing = table_.find(key);
  if (existing != table_.end() && existing->second.agent_id != agent_id) {
    throw ServerError(ServerErrc::Duplicate, "domain " + mapping.domain + " belongs to another agent");
  }
  if (options_.require_confirmation) {
    const auto refuse = [&](mitigation::VerifyStep step, std::string reason) {
      refusals_.push_back({agent_id, mapping.domain, step, reason});
      if (existing != table_.end()) table_.erase(existing);
      return ServerError(ServerErrc::Unauthorized, "registration of " + mapping.domain + " refused at step " +
                                                       mitigation::to_string(step) + ": " + reason);
    };
    if (!confirmation) throw refuse(mitigation::VerifyStep::Signature, "no signed confirmation supplied");
    const mitigation::VerifyResult r =
        verifier_.verify(*confirmation, {mapping.domain, mapping.servicehost, mapping.serviceport}, now_seconds);
    if (!r.ok) throw refuse(r.failed_step, r.reason);
  }
  PfwRegistration reg;
  reg.pfw_domain = key;
  reg.agent_id = agent_id;
  reg.tunnel_ref = tunnel;
  reg.style = style;
  reg.confirmation = confirmation;
  reg.mapping = mapping;
  if (const auto p = policies_.find(key); p != policies_.end()) reg.access_policy = p->second;
  auto& slot = table_[key];
  slot = std::move(reg);
  return slot;
}

void PfsServer::set_access_policy(const std::string& pfw_domain, AccessPolicy policy) {
  if (!policy.ip_allow.empty() && !policy.ip_block.empty()) {
    throw ServerError(ServerErrc::InvalidPolicy, "an allowlist and a blocklist cannot both be set");
  }
  const std::string key = lower(pfw_domain);
  std::unique_lock lock(table_mu_);
  if (const auto it = table_.find(key); it != table_.end()) it->second.access_policy = policy;
  policies_[key] = std::move(policy);
}

std::optional<PfwRegistration> PfsServer::lookup(const std::string& pfw_domain) const {
  std::shared_lock lock(table_mu_);
  const auto it = table_.find(lower(pfw_domain));
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::vector<PfwRegistration> PfsServer::registrations() const {
  std::shared_lock lock(table_mu_);
  std::vector<PfwRegistration> out;
  for (const auto& [d, r] : table_) out.push_back(r);
  return out;
}

std::optional<mitigation::SignedConfirmation> PfsServer::confirmation_for(const std::string& pfw_domain) const {
  const auto reg = lookup(pfw_domain);
  if (!reg) return std::nullopt;
  return reg->confirmation;
}

std::set<sim::LinkId> PfsServer::tunnels_of(const std::string& agent_id) const {
  std::shared_lock lock(table_mu_);
  std::set<sim::LinkId> out;
  for (const auto& [d, r] : table_) {
    if (r.agent_id == agent_id && r.tunnel_ref) out.insert(*r.tunnel_ref);
  }
  return out;
}

PublicOutcome PfsServer::handle_public_request(sim::SimNet& net, const std::string& pfw_domain,
                                               std::string_view raw_request, const std::string& visitor_ip,
                                               Proto proto, sim::LinkId visitor_link) {
  PublicOutcome out;
  const auto respond = [&](http::Response resp) {
    out.kind = PublicOutcome::Kind::Responded;
    out.response = std::move(resp);
    net.send(visitor_link, node_id_, to_bytes(http::serialize(out.response)), "public-response");
    return out;
  };

  const auto req = http::parse_request(raw_request);
  if (!req) return respond(error_page(400, "Bad Request", "", "Malformed request."));
  const auto reg = lookup(pfw_domain);
  if (!reg) return respond(error_page(404, "Not Found", "", "Tunnel " + pfw_domain + " not found."));

  const AccessDecision decision =
      enforce_access_control(reg->access_policy, visitor_ip, http::header(req->headers, "User-Agent"),
                             http::header(req->headers, "Authorization"), reg->style);
  if (decision.kind == AccessDecision::Kind::DropConnection) {
    net.note(node_id_, "connection-dropped", pfw_domain + " " + visitor_ip);
    net.close(visitor_link, node_id_);
    out.kind = PublicOutcome::Kind::Dropped;
    return out;
  }
  if (decision.kind == AccessDecision::Kind::Deny) return respond(decision.response);

  if (!reg->online() || !net.link(*reg->tunnel_ref).open) {
    return respond(error_page(502, "Bad Gateway", "", "Tunnel " + pfw_domain + " is offline."));
  }

  ForwardedRequest fwd;
  fwd.method = req->method;
  fwd.path = req->target;
  fwd.headers = req->headers;
  fwd.body = req->body;
  fwd.x_forwarded_for = visitor_ip;
  fwd.x_forwarded_proto = proto;

  const std::uint32_t stream = next_stream_++;
  pending_[stream] = Pending{visitor_link, *reg->tunnel_ref, pfw_domain};
  net.send(*reg->tunnel_ref, node_id_,
           wire::data_frame(frame::FrameType::DataRequest, stream, http::serialize(fwd.to_http())), "data-request");
  out.kind = PublicOutcome::Kind::Relayed;
  out.stream_id = stream;
  return out;
}

void PfsServer::send_control(sim::SimNet& net, sim::LinkId link, const Json& msg) {
  net.send(link, node_id_, wire::control_frame(msg), "control:" + msg.value("type", std::string()));
}

void PfsServer::on_message(sim::SimNet& net, const sim::SimMessage& msg) {
  const sim::SimLink& l = net.link(msg.link);
  if (l.datagram) return;  // heartbeats need no answer
  const int port = config::split_host_port(l.dialed).port;
  if (options_.tunnel_ports.contains(port)) {
    on_tunnel_bytes(net, msg);
  } else {
    on_public_bytes(net, msg);
  }
}

void PfsServer::on_public_bytes(sim::SimNet& net, const sim::SimMessage& msg) {
  const sim::SimLink& l = net.link(msg.link);
  const Proto proto = config::split_host_port(l.dialed).port == options_.https_port ? Proto::Https : Proto::Http;
  const std::string raw = to_string(msg.bytes);
  std::string domain;
  if (const auto req = http::parse_request(raw)) domain = http::request_host(*req);
  handle_public_request(net, domain, raw, net.peer_address(msg.link, node_id_), proto, msg.link);
}

void PfsServer::on_tunnel_bytes(sim::SimNet& net, const sim::SimMessage& msg) {
  frame::FrameReader& reader = readers_[msg.link];
  reader.feed(msg.bytes);
  while (true) {
    std::optional<frame::TunnelFrame> f;
    try {
      f = reader.next();
    } catch (const frame::CodecError& e) {
      net.note(node_id_, "server-invalid-data", e.what());
      reader.reset();
      net.close(msg.link, node_id_);
      return;
    }
    if (!f) return;
    switch (f->frame_type) {
      case frame::FrameType::ControlUpdate:
        on_control(net, msg.link, *f);
        break;
      case frame::FrameType::DataResponse: {
        const auto it = pending_.find(f->stream_id);
        if (it == pending_.end() || it->second.tunnel != msg.link) break;
        const sim::LinkId visitor = it->second.visitor_link;
        pending_.erase(it);
        if (net.link(visitor).open) net.send(visitor, node_id_, std::move(f->payload), "public-response");
        break;
      }
      case frame::FrameType::Heartbeat:
      case frame::FrameType::DataRequest:
        break;
    }
  }
}

void PfsServer::on_control(sim::SimNet& net, sim::LinkId link, const frame::TunnelFrame& f) {
  Json m;
  try {
    m = Json::parse(f.payload.begin(), f.payload.end());
  } catch (const Json::parse_error&) {
    net.note(node_id_, "server-invalid-data", "unparseable control message");
    return;
  }
  const std::string type = m.value("type", std::string());
  const auto session = sessions_.find(link);

  if (type == "hello") {
    const std::string agent = m.value("agent_id", std::string());
    if (authenticate(agent, m.value("token", std::string()))) {
      sessions_[link] = agent;
      send_control(net, link, Json{{"type", "welcome"}});
    } else {
      send_control(net, link, Json{{"type", "refused"}, {"reason", "bad token"}});
      net.close(link, node_id_);
    }
    return;
  }

  if (type == "reserve") {
    if (session == sessions_.end()) {
      send_control(net, link, Json{{"type", "refused"}, {"reason", "no session"}});
      return;
    }
    const bool free_tier = m.value("free_tier", true);
    const std::string domain =
        assign_domain(session->second, ProviderStyle::NgrokStyle, free_tier, net.peer_address(link, node_id_));
    reserved_by_[domain] = session->second;
    send_control(net, link, Json{{"type", "reserved"}, {"index", m.value("index", 0)}, {"domain", domain}});
    return;
  }

  if (type == "register") {
    std::string agent;
    if (session != sessions_.end()) {
      agent = session->second;
    } else {
      agent = m.value("agent_id", std::string());
      if (!authenticate(agent, m.value("token", std::string()))) {
        send_control(net, link, Json{{"type", "refused"}, {"reason", "bad token"}});
        return;
      }
      sessions_[link] = agent;
    }
    config::Mapping mapping;
    const Json jm = m.value("mapping", Json::object());
    mapping.domain = jm.value("domain", std::string());
    mapping.servicehost = jm.value("servicehost", std::string());
    mapping.serviceport = jm.value("serviceport", 0);
    const ProviderStyle style = parse_style(m.value("style", std::string("oray"))).value_or(ProviderStyle::OrayStyle);
    Json reply{{"type", "refused"}, {"domain", mapping.domain}};

    if (style == ProviderStyle::NgrokStyle) {
      const auto r = reserved_by_.find(mapping.domain);
      if (r == reserved_by_.end() || r->second != agent) {
        reply["reason"] = "domain was not assigned to this agent";
        send_control(net, link, reply);
        return;
      }
    }
    std::optional<mitigation::SignedConfirmation> confirmation;
    if (m.contains("confirmation")) {
      try {
        confirmation = mitigation::confirmation_from_json(m["confirmation"]);
      } catch (const std::invalid_argument& e) {
        net.note(node_id_, "confirmation-malformed", e.what());
      }
    }
    const auto now = static_cast<std::int64_t>(sim::to_seconds(net.now()));
    try {
      register_pfw(agent, mapping, confirmation, style, link, now);
      net.note(node_id_, "registered", mapping.domain + " -> " + agent);
      send_control(net, link, Json{{"type", "registered"}, {"domain", mapping.domain}});
    } catch (const ServerError& e) {
      if (e.code() == ServerErrc::Unauthorized && !refusals_.empty()) {
        reply["step"] = mitigation::to_string(refusals_.back().step);
      }
      reply["reason"] = e.what();
      net.note(node_id_, "registration-refused", e.what());
      send_control(net, link, reply);
    }
    return;
  }
  net.note(node_id_, "server-unknown-control", type);
}

void PfsServer::on_link_closed(sim::SimNet& net, sim::LinkId link) {
  readers_.erase(link);
  sessions_.erase(link);
  {
    std::unique_lock lock(table_mu_);
    for (auto& [d, r] : table_) {
      if (r.tunnel_ref == link) r.tunnel_ref.reset();
    }
  }
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (it->second.tunnel == link) {
      const sim::LinkId visitor = it->second.visitor_link;
      const std::string domain = it->second.domain;
      it = pending_.erase(it);
      if (net.link(visitor).open) {
        net.send(visitor, node_id_,
                 to_bytes(http::serialize(error_page(502, "Bad Gateway", "", "Tunnel " + domain + " is offline."))),
                 "public-response");
      }
    } else if (it->second.visitor_link == link) {
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
}

}  // namespace pfs::server
