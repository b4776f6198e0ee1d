#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pfs/http.hpp"
#include "pfs/simnet.hpp"

// Simulated peers around the PFS: internal web services, Internet visitors,
// and the control server that hands out forwarding configuration.
namespace pfs::services {

class HttpService : public sim::NodeBehavior {
 public:
  using Handler = std::function<http::Response(const http::Request&)>;

  HttpService(std::string node_id, Handler handler);
  // Answers every request with `status` and `body`.
  static std::shared_ptr<HttpService> fixed(std::string node_id, int status, std::string body);

  const std::vector<http::Request>& received() const { return received_; }

  void on_message(sim::SimNet& net, const sim::SimMessage& msg) override;

 private:
  std::string node_id_;
  Handler handler_;
  std::vector<http::Request> received_;
};

struct Visit {
  std::string host;
  std::string request;  // raw bytes sent
  sim::LinkId link = 0;
  std::optional<std::string> response;  // raw bytes received
  bool dropped = false;                  // connection closed without a response
  bool unreachable = false;
};

class Visitor : public sim::NodeBehavior {
 public:
  explicit Visitor(std::string node_id) : node_id_(std::move(node_id)) {}

  // Opens a connection to host:80 (http) or host:443 (https, verified TLS)
  // and sends the request. Returns the visit index.
  std::size_t visit(sim::SimNet& net, const std::string& host, http::Request request, bool https = false);

  const std::vector<Visit>& visits() const { return visits_; }
  std::optional<http::Response> response(std::size_t index) const;

  void on_message(sim::SimNet& net, const sim::SimMessage& msg) override;
  void on_link_closed(sim::SimNet& net, sim::LinkId link) override;

 private:
  std::string node_id_;
  std::vector<Visit> visits_;
  std::map<sim::LinkId, std::size_t> by_link_;
};

// Serves configuration text on "GET /config" and pushes ControlUpdate frames
// to agents subscribed over the update channel (any link carrying frames).
class ControlServer : public sim::NodeBehavior {
 public:
  explicit ControlServer(std::string node_id, std::string config_text = {});

  void set_config(std::string text) { config_text_ = std::move(text); }
  const std::string& config_text() const { return config_text_; }

  // Sends the text as a ControlUpdate to every subscriber. Returns how many.
  std::size_t push_update(sim::SimNet& net, const std::string& text);
  // Sends arbitrary payload bytes as a ControlUpdate frame.
  std::size_t push_raw(sim::SimNet& net, const Bytes& payload);

  std::size_t pulls_served() const { return pulls_served_; }
  const std::set<std::string>& subscribers() const { return subscriber_agents_; }

  void on_message(sim::SimNet& net, const sim::SimMessage& msg) override;
  void on_link_closed(sim::SimNet& net, sim::LinkId link) override;

 private:
  std::string node_id_;
  std::string config_text_;
  std::size_t pulls_served_ = 0;
  std::map<sim::LinkId, std::string> subscribers_;
  std::set<std::string> subscriber_agents_;
};

}  // namespace pfs::services
