#include "pfs/agent.hpp"

#include <algorithm>

#include "pfs/http.hpp"
#include "pfs/wire.hpp"

namespace pfs::agent {

using pfs::to_string;

namespace {

using Json = nlohmann::ordered_json;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string endpoint(const std::string& host, int port) { return host + ":" + std::to_string(port); }

}  // namespace

const char* to_string(AgentPhase p) {
  switch (p) {
    case AgentPhase::Idle: return "Idle";
    case AgentPhase::PullingConfig: return "PullingConfig";
    case AgentPhase::TunnelUp: return "TunnelUp";
    case AgentPhase::Restarting: return "Restarting";
  }
  return "Unknown";
}

const char* to_string(AgentErrc e) {
  switch (e) {
    case AgentErrc::BadConfig: return "BadConfig";
    case AgentErrc::Unreachable: return "Unreachable";
    case AgentErrc::NoConfig: return "NoConfig";
  }
  return "Unknown";
}

const char* PfsAgent::role_name(Role r) {
  switch (r) {
    case Role::Pull: return "pull";
    case Role::Data: return "data";
    case Role::Control: return "control";
    case Role::Tunnel: return "tunnel";
    case Role::Heartbeat: return "heartbeat";
    case Role::Internal: return "internal";
  }
  return "unknown";
}

PfsAgent::PfsAgent(std::string node_id, AgentOptions options)
    : node_id_(std::move(node_id)), options_(std::move(options)) {
  state_.heartbeat_interval = options_.heartbeat_interval;
}

void PfsAgent::set_local_config(config::ForwardingConfig config) { state_.config = std::move(config); }

void PfsAgent::start(sim::SimNet& net) {
  if (options_.style == server::ProviderStyle::OrayStyle) {
    pull_config(net);
    return;
  }
  if (!state_.config) throw AgentError(AgentErrc::NoConfig, "ngrok-style agent needs a local configuration");
  establish_tunnels(net);
}

std::set<std::string> PfsAgent::live_domains() const { return live_; }

std::vector<sim::LinkId> PfsAgent::links_with_role(const std::string& role) const {
  std::vector<sim::LinkId> out;
  for (const auto& [id, ls] : links_) {
    if (role == role_name(ls.role)) out.push_back(id);
  }
  return out;
}

void PfsAgent::close_links(sim::SimNet& net, bool keep_control) {
  for (auto it = links_.begin(); it != links_.end();) {
    if (keep_control && it->second.role == Role::Control) {
      ++it;
      continue;
    }
    net.close(it->first, node_id_);
    it = links_.erase(it);
  }
  live_.clear();
}

void PfsAgent::pull_config(sim::SimNet& net) {
  state_.phase = AgentPhase::PullingConfig;
  ++config_pulls_;
  net.note(node_id_, "config-pull", "attempt " + std::to_string(pull_attempt_ + 1));
  sim::LinkId link = 0;
  try {
    link = net.dial(node_id_, options_.control_endpoint, options_.pull_security);
  } catch (const sim::SimError&) {
    on_pull_failure(net, AgentErrc::Unreachable);
    return;
  }
  links_[link].role = Role::Pull;
  http::Request req;
  req.target = "/config";
  req.headers = {{"Host", config::split_host_port(options_.control_endpoint).host},
                 {"X-Agent-Id", options_.agent_id}};
  net.send(link, node_id_, to_bytes(http::serialize(req)), "config-request");
}

void PfsAgent::on_pull_failure(sim::SimNet& net, AgentErrc err) {
  state_.last_error = err;
  net.note(node_id_, err == AgentErrc::BadConfig ? "bad-config" : "pull-unreachable");
  if (pull_attempt_ < options_.backoff.size()) {
    const sim::SimTime delay = options_.backoff[pull_attempt_++];
    const std::uint64_t gen = generation_;
    net.schedule(delay, [this, &net, gen] {
      if (gen == generation_) pull_config(net);
    });
    return;
  }
  state_.phase = AgentPhase::Idle;
  net.note(node_id_, "pull-gave-up", to_string(err));
}

void PfsAgent::send_register(sim::SimNet& net, sim::LinkId link, const config::Mapping& mapping) {
  Json msg{{"type", "register"},
           {"agent_id", options_.agent_id},
           {"token", options_.token},
           {"style", server::to_string(options_.style)},
           {"mapping", Json{{"domain", mapping.domain},
                            {"servicehost", mapping.servicehost},
                            {"serviceport", mapping.serviceport}}}};
  if (options_.tee) {
    const auto now = static_cast<std::int64_t>(sim::to_seconds(net.now()));
    const mitigation::ConfirmationDialog dialog = mitigation::build_dialog(options_.agent_id, mapping, now, net.rng());
    const mitigation::Decision decision =
        options_.consent ? options_.consent(dialog) : mitigation::Decision::Granted;
    try {
      msg["confirmation"] = mitigation::to_json(mitigation::tee_sign(*options_.tee, dialog, decision));
      net.note(node_id_, "tee-confirmation", mapping.domain + " " + mitigation::to_string(decision));
    } catch (const mitigation::TeeError& e) {
      net.note(node_id_, "tee-no-presence", e.what());
    }
  }
  net.send(link, node_id_, wire::control_frame(msg), "control:register");
}

void PfsAgent::establish_tunnels(sim::SimNet& net) {
  if (!state_.config) throw AgentError(AgentErrc::NoConfig, "no configuration to establish tunnels from");
  const config::ForwardingConfig& cfg = *state_.config;
  const std::string old_phsl = [&] {
    for (const auto& [id, ls] : links_) {
      if (ls.role == Role::Control) return net.link(id).dialed;
    }
    return std::string();
  }();
  const bool keep_control = options_.style == server::ProviderStyle::OrayStyle && !old_phsl.empty() &&
                            lower(old_phsl) == lower(cfg.phsl);
  close_links(net, keep_control);
  ++generation_;
  assigned_.clear();

  try {
    if (options_.style == server::ProviderStyle::NgrokStyle) {
      const sim::LinkId t = net.dial(node_id_, options_.tunnel_endpoint, options_.tunnel_security);
      links_[t].role = Role::Tunnel;
      net.send(t, node_id_, wire::control_frame(Json{{"type", "hello"}, {"agent_id", options_.agent_id},
                                                     {"token", options_.token}}),
               "control:hello");
    } else {
      for (std::size_t i = 0; i < cfg.mappings.size(); ++i) {
        const config::Mapping& m = cfg.mappings[i];
        const sim::LinkId d =
            net.dial(node_id_, endpoint(m.server.serverhost, m.server.serverport), options_.data_security);
        links_[d].role = Role::Data;
        links_[d].mapping = i;
        send_register(net, d, m);
        if (m.server.serverudpport != 0 && m.server.feature.find("udp") != std::string::npos &&
            options_.heartbeat_interval > 0) {
          const sim::LinkId h = net.dial(node_id_, endpoint(m.server.serverhost, m.server.serverudpport),
                                         sim::ChannelSecurity::Plain, true);
          links_[h].role = Role::Heartbeat;
        }
      }
      if (!keep_control) {
        const sim::LinkId c = net.dial(node_id_, cfg.phsl, options_.update_security);
        links_[c].role = Role::Control;
        net.send(c, node_id_, wire::control_frame(Json{{"type", "subscribe"}, {"agent_id", options_.agent_id}}),
                 "control:subscribe");
      }
    }
  } catch (const sim::SimError& e) {
    on_establish_failure(net, e.what());
    return;
  }
  state_.phase = AgentPhase::TunnelUp;
  net.note(node_id_, "tunnel-up", server::to_string(options_.style));
  schedule_heartbeat(net, generation_);
}

void PfsAgent::on_establish_failure(sim::SimNet& net, const std::string& why) {
  close_links(net, false);
  ++generation_;
  net.note(node_id_, "establish-failed", why);
  if (establish_attempt_ < options_.backoff.size()) {
    const sim::SimTime delay = options_.backoff[establish_attempt_++];
    const std::uint64_t gen = generation_;
    state_.phase = AgentPhase::Restarting;
    net.schedule(delay, [this, &net, gen] {
      if (gen == generation_) establish_tunnels(net);
    });
    return;
  }
  state_.phase = AgentPhase::Idle;
  state_.last_error = AgentErrc::Unreachable;
}

void PfsAgent::schedule_heartbeat(sim::SimNet& net, std::uint64_t gen) {
  if (options_.heartbeat_interval <= 0 || options_.style != server::ProviderStyle::OrayStyle) return;
  net.schedule(options_.heartbeat_interval, [this, &net, gen] {
    if (gen != generation_ || state_.phase != AgentPhase::TunnelUp) return;
    for (const auto& [id, ls] : links_) {
      if (ls.role == Role::Heartbeat) net.send(id, node_id_, wire::data_frame(frame::FrameType::Heartbeat, 0, ""), "heartbeat");
    }
    schedule_heartbeat(net, gen);
  });
}

std::optional<config::Mapping> PfsAgent::mapping_for(const std::string& host) const {
  if (!state_.config) return std::nullopt;
  const std::string h = lower(host);
  if (options_.style == server::ProviderStyle::NgrokStyle) {
    const auto it = assigned_.find(h);
    if (it == assigned_.end() || it->second >= state_.config->mappings.size()) return std::nullopt;
    config::Mapping m = state_.config->mappings[it->second];
    m.domain = it->first;
    return m;
  }
  for (const config::Mapping& m : state_.config->mappings) {
    if (lower(m.domain) == h) return m;
  }
  return std::nullopt;
}

void PfsAgent::reply_502(sim::SimNet& net, sim::LinkId upstream, std::uint32_t stream, const std::string& why) {
  net.note(node_id_, "forward-failed", why);
  const http::Response r = server::error_page(502, "Bad Gateway", "", why);
  if (links_.contains(upstream)) {
    net.send(upstream, node_id_, wire::data_frame(frame::FrameType::DataResponse, stream, http::serialize(r)),
             "data-response");
  }
}

void PfsAgent::forward_to_internal(sim::SimNet& net, sim::LinkId upstream, std::uint32_t stream, const Bytes& request) {
  const auto req = http::parse_request(to_string(request));
  if (!req) {
    reply_502(net, upstream, stream, "Unparseable forwarded request.");
    return;
  }
  const std::string host = http::request_host(*req);
  const auto mapping = mapping_for(host);
  if (!mapping) {
    reply_502(net, upstream, stream, "No mapping for " + host + ".");
    return;
  }
  sim::LinkId internal = 0;
  try {
    internal = net.dial(node_id_, endpoint(mapping->servicehost, mapping->serviceport), sim::ChannelSecurity::Plain);
  } catch (const sim::SimError&) {
    reply_502(net, upstream, stream, "Internal service " + endpoint(mapping->servicehost, mapping->serviceport) +
                                         " unreachable.");
    return;
  }
  LinkState& ls = links_[internal];
  ls.role = Role::Internal;
  ls.upstream = upstream;
  ls.stream = stream;
  net.send(internal, node_id_, request, "internal-request");
}

void PfsAgent::apply_config_update(sim::SimNet& net, const frame::TunnelFrame& update) {
  if (update.frame_type != frame::FrameType::ControlUpdate) {
    handle_invalid_data(net, "unexpected frame type on update channel");
    return;
  }
  config::ForwardingConfig cfg;
  try {
    cfg = config::parse_config(to_string(update.payload));
  } catch (const config::ConfigError& e) {
    handle_invalid_data(net, std::string("unparseable config update: ") + e.what());
    return;
  }
  if (!config::validate_config(cfg).empty()) {
    handle_invalid_data(net, "config update failed validation");
    return;
  }
  state_.config = std::move(cfg);
  net.note(node_id_, "config-update-applied");
  establish_attempt_ = 0;
  establish_tunnels(net);
}

void PfsAgent::handle_invalid_data(sim::SimNet& net, const std::string& reason) {
  ++invalid_data_events_;
  ++state_.restart_count;
  state_.phase = AgentPhase::Restarting;
  net.note(node_id_, "agent-restart", reason);
  close_links(net, false);
  ++generation_;
  pull_attempt_ = 0;
  establish_attempt_ = 0;
  if (options_.style == server::ProviderStyle::OrayStyle) {
    pull_config(net);
  } else {
    establish_tunnels(net);
  }
}

void PfsAgent::on_tunnel_control(sim::SimNet& net, sim::LinkId link, const frame::TunnelFrame& f) {
  Json m;
  try {
    m = Json::parse(f.payload.begin(), f.payload.end());
  } catch (const Json::parse_error&) {
    handle_invalid_data(net, "unparseable control message");
    return;
  }
  const std::string type = m.value("type", std::string());
  if (type == "welcome") {
    for (std::size_t i = 0; i < state_.config->mappings.size(); ++i) {
      net.send(link, node_id_,
               wire::control_frame(Json{{"type", "reserve"}, {"index", i}, {"free_tier", options_.free_tier}}),
               "control:reserve");
    }
  } else if (type == "reserved") {
    const std::size_t index = m.value("index", std::size_t{0});
    const std::string domain = lower(m.value("domain", std::string()));
    if (index >= state_.config->mappings.size()) return;
    assigned_[domain] = index;
    config::Mapping mapping = state_.config->mappings[index];
    mapping.domain = domain;
    send_register(net, link, mapping);
  } else if (type == "registered") {
    const std::string domain = m.value("domain", std::string());
    registrations_.push_back({domain, true, "", ""});
    live_.insert(lower(domain));
    establish_attempt_ = 0;
  } else if (type == "refused") {
    const std::string domain = m.value("domain", std::string());
    registrations_.push_back({domain, false, m.value("step", std::string()), m.value("reason", std::string())});
    live_.erase(lower(domain));
    net.note(node_id_, "registration-refused", domain);
  }
}

void PfsAgent::on_frames(sim::SimNet& net, sim::LinkId link) {
  const std::uint64_t gen = generation_;
  while (true) {
    const auto it = links_.find(link);
    if (it == links_.end() || gen != generation_) return;
    std::optional<frame::TunnelFrame> f;
    try {
      f = it->second.reader.next();
    } catch (const frame::CodecError& e) {
      net.note(node_id_, e.code() == frame::CodecErrc::BadMac ? "bad-mac" : "bad-header", e.what());
      handle_invalid_data(net, e.what());
      return;
    }
    if (!f) return;
    const Role role = it->second.role;
    if (role == Role::Control) {
      apply_config_update(net, *f);
      continue;
    }
    switch (f->frame_type) {
      case frame::FrameType::DataRequest:
        forward_to_internal(net, link, f->stream_id, f->payload);
        break;
      case frame::FrameType::ControlUpdate:
        on_tunnel_control(net, link, *f);
        break;
      case frame::FrameType::DataResponse:
      case frame::FrameType::Heartbeat:
        break;
    }
  }
}

void PfsAgent::on_message(sim::SimNet& net, const sim::SimMessage& msg) {
  const auto it = links_.find(msg.link);
  if (it == links_.end()) return;  // stale link from before a restart
  LinkState& ls = it->second;
  switch (ls.role) {
    case Role::Pull: {
      ls.answered = true;
      net.close(msg.link, node_id_);
      links_.erase(it);
      const auto resp = http::parse_response(to_string(msg.bytes));
      if (!resp || resp->status != 200) {
        on_pull_failure(net, AgentErrc::BadConfig);
        return;
      }
      config::ForwardingConfig cfg;
      try {
        cfg = config::parse_config(resp->body);
      } catch (const config::ConfigError& e) {
        net.note(node_id_, "config-parse-error", e.what());
        on_pull_failure(net, AgentErrc::BadConfig);
        return;
      }
      if (const auto v = config::validate_config(cfg); !v.empty()) {
        net.note(node_id_, "config-invalid", v.front().field + ": " + v.front().message);
        on_pull_failure(net, AgentErrc::BadConfig);
        return;
      }
      state_.config = std::move(cfg);
      state_.last_error.reset();
      pull_attempt_ = 0;
      net.note(node_id_, "config-adopted", state_.config->phsl);
      establish_tunnels(net);
      return;
    }
    case Role::Internal: {
      ls.answered = true;
      const sim::LinkId upstream = ls.upstream;
      const std::uint32_t stream = ls.stream;
      net.close(msg.link, node_id_);
      links_.erase(it);
      if (links_.contains(upstream)) {
        net.send(upstream, node_id_,
                 frame::encode_frame(frame::make_frame(frame::FrameType::DataResponse, stream, msg.bytes)),
                 "data-response");
      }
      return;
    }
    case Role::Heartbeat:
      return;
    case Role::Data:
    case Role::Control:
    case Role::Tunnel:
      ls.reader.feed(msg.bytes);
      on_frames(net, msg.link);
      return;
  }
}

void PfsAgent::on_link_closed(sim::SimNet& net, sim::LinkId link) {
  const auto it = links_.find(link);
  if (it == links_.end()) return;
  const LinkState ls = std::move(it->second);
  links_.erase(it);
  switch (ls.role) {
    case Role::Pull:
      if (!ls.answered) on_pull_failure(net, AgentErrc::Unreachable);
      return;
    case Role::Internal:
      if (!ls.answered) reply_502(net, ls.upstream, ls.stream, "Internal service closed the connection.");
      return;
    case Role::Data:
    case Role::Tunnel:
      net.note(node_id_, "tunnel-closed", std::to_string(link));
      if (state_.phase == AgentPhase::TunnelUp) on_establish_failure(net, "tunnel closed by peer");
      return;
    case Role::Control:
      net.note(node_id_, "control-closed", std::to_string(link));
      return;
    case Role::Heartbeat:
      return;
  }
}

}  // namespace pfs::agent
