#include "pfs/services.hpp"

#include <json.hpp>

#include "pfs/frame.hpp"
#include "pfs/wire.hpp"

namespace pfs::services {

HttpService::HttpService(std::string node_id, Handler handler)
    : node_id_(std::move(node_id)), handler_(std::move(handler)) {}

std::shared_ptr<HttpService> HttpService::fixed(std::string node_id, int status, std::string body) {
  return std::make_shared<HttpService>(std::move(node_id), [status, body](const http::Request&) {
    http::Headers h{{"Content-Type", "text/plain"}};
    return http::make_response(status, status == 200 ? "OK" : "Status", body, h);
  });
}

void HttpService::on_message(sim::SimNet& net, const sim::SimMessage& msg) {
  const auto req = http::parse_request(to_string(msg.bytes));
  http::Response resp;
  if (req) {
    received_.push_back(*req);
    resp = handler_(*req);
  } else {
    resp = http::make_response(400, "Bad Request", "bad request\n");
  }
  net.send(msg.link, node_id_, to_bytes(http::serialize(resp)), "http-response");
}

std::size_t Visitor::visit(sim::SimNet& net, const std::string& host, http::Request request, bool https) {
  if (!http::header(request.headers, "Host")) request.headers.insert(request.headers.begin(), {"Host", host});
  Visit v;
  v.host = host;
  v.request = http::serialize(request);
  const std::size_t index = visits_.size();
  try {
    v.link = net.dial(node_id_, host + (https ? ":443" : ":80"),
                      https ? sim::ChannelSecurity::TlsVerified : sim::ChannelSecurity::Plain);
  } catch (const sim::SimError&) {
    v.unreachable = true;
    visits_.push_back(std::move(v));
    return index;
  }
  by_link_[v.link] = index;
  net.send(v.link, node_id_, to_bytes(v.request), "visitor-request");
  visits_.push_back(std::move(v));
  return index;
}

std::optional<http::Response> Visitor::response(std::size_t index) const {
  if (index >= visits_.size() || !visits_[index].response) return std::nullopt;
  return http::parse_response(*visits_[index].response);
}

void Visitor::on_message(sim::SimNet& net, const sim::SimMessage& msg) {
  const auto it = by_link_.find(msg.link);
  if (it == by_link_.end()) return;
  visits_[it->second].response = to_string(msg.bytes);
  net.close(msg.link, node_id_);
}

void Visitor::on_link_closed(sim::SimNet&, sim::LinkId link) {
  const auto it = by_link_.find(link);
  if (it == by_link_.end()) return;
  if (!visits_[it->second].response) visits_[it->second].dropped = true;
}

ControlServer::ControlServer(std::string node_id, std::string config_text)
    : node_id_(std::move(node_id)), config_text_(std::move(config_text)) {}

std::size_t ControlServer::push_raw(sim::SimNet& net, const Bytes& payload) {
  std::size_t n = 0;
  for (const auto& [link, agent] : subscribers_) {
    if (!net.link(link).open) continue;
    net.send(link, node_id_, frame::encode_frame(frame::make_frame(frame::FrameType::ControlUpdate, 0, payload)),
             "config-update");
    ++n;
  }
  return n;
}

std::size_t ControlServer::push_update(sim::SimNet& net, const std::string& text) {
  config_text_ = text;
  return push_raw(net, to_bytes(text));
}

void ControlServer::on_message(sim::SimNet& net, const sim::SimMessage& msg) {
  const std::string raw = to_string(msg.bytes);
  if (const auto req = http::parse_request(raw)) {
    ++pulls_served_;
    http::Headers h{{"Content-Type", "application/json"}};
    net.send(msg.link, node_id_, to_bytes(http::serialize(http::make_response(200, "OK", config_text_, h))),
             "config-response");
    net.close(msg.link, node_id_);
    return;
  }
  // Update channel: the agent announces itself with a subscribe message.
  try {
    const auto d = frame::decode_frame(msg.bytes);
    const auto j = nlohmann::json::parse(d.frame.payload.begin(), d.frame.payload.end());
    if (j.value("type", std::string()) == "subscribe") {
      const std::string agent = j.value("agent_id", std::string());
      subscribers_[msg.link] = agent;
      subscriber_agents_.insert(agent);
      net.note(node_id_, "subscribed", agent);
    }
  } catch (const std::exception& e) {
    net.note(node_id_, "control-invalid-data", e.what());
  }
}

void ControlServer::on_link_closed(sim::SimNet&, sim::LinkId link) { subscribers_.erase(link); }

}  // namespace pfs::services
