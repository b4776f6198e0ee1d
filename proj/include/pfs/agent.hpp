#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pfs/config.hpp"
#include "pfs/frame.hpp"
#include "pfs/mitigation.hpp"
#include "pfs/server.hpp"
#include "pfs/simnet.hpp"

namespace pfs::agent {

enum class AgentPhase { Idle, PullingConfig, TunnelUp, Restarting };

const char* to_string(AgentPhase p);

enum class AgentErrc { BadConfig, Unreachable, NoConfig };

const char* to_string(AgentErrc e);

using AgentError = BasicError<AgentErrc>;

struct AgentState {
  AgentPhase phase = AgentPhase::Idle;
  std::optional<config::ForwardingConfig> config;
  std::size_t restart_count = 0;
  sim::SimTime heartbeat_interval = sim::seconds(30);
  std::optional<AgentErrc> last_error;
};

// Decides what the device owner answers on the confirmation dialog.
using Consent = std::function<mitigation::Decision(const mitigation::ConfirmationDialog&)>;

struct AgentOptions {
  std::string agent_id = "agent";
  std::string token;
  server::ProviderStyle style = server::ProviderStyle::OrayStyle;

  // Oray-style: initial configuration pull.
  std::string control_endpoint = "hsk-embed.pfs.test:443";
  sim::ChannelSecurity pull_security = sim::ChannelSecurity::TlsNoVerify;
  // Oray-style: data tunnel and the config-update channel named by phsl.
  sim::ChannelSecurity data_security = sim::ChannelSecurity::Plain;
  sim::ChannelSecurity update_security = sim::ChannelSecurity::Plain;

  // Ngrok-style: single multiplexed tunnel.
  std::string tunnel_endpoint = "tunnel.pfs.test:4443";
  sim::ChannelSecurity tunnel_security = sim::ChannelSecurity::TlsVerified;
  bool free_tier = true;

  sim::SimTime heartbeat_interval = sim::seconds(30);  // 0 disables heartbeats
  std::vector<sim::SimTime> backoff = {sim::seconds(1), sim::seconds(2), sim::seconds(4)};

  // When set, every mapping is confirmed on the TEE before registration.
  std::shared_ptr<mitigation::SimulatedTee> tee;
  Consent consent;
};

struct RegistrationOutcome {
  std::string domain;
  bool registered = false;
  std::string step;  // failing verification step when refused
  std::string reason;
};

class PfsAgent : public sim::NodeBehavior {
 public:
  PfsAgent(std::string node_id, AgentOptions options);

  const std::string& node_id() const { return node_id_; }
  const AgentOptions& options() const { return options_; }
  const AgentState& state() const { return state_; }

  // Ngrok-style agents read their mappings locally instead of pulling them.
  void set_local_config(config::ForwardingConfig config);

  // Oray-style: pull_config; Ngrok-style: establish_tunnels on the local config.
  void start(sim::SimNet& net);

  // Fetches configuration over the pull channel. Failures are retried with
  // the backoff schedule, then the agent goes Idle with last_error set.
  void pull_config(sim::SimNet& net);

  void establish_tunnels(sim::SimNet& net);

  // Relays one DataRequest to the mapping's internal service and answers on
  // `upstream` with a DataResponse carrying the service's bytes unmodified.
  void forward_to_internal(sim::SimNet& net, sim::LinkId upstream, std::uint32_t stream, const Bytes& request);

  void apply_config_update(sim::SimNet& net, const frame::TunnelFrame& update);

  // Restart: close everything and pull the configuration again.
  void handle_invalid_data(sim::SimNet& net, const std::string& reason);

  std::size_t config_pulls() const { return config_pulls_; }
  std::size_t invalid_data_events() const { return invalid_data_events_; }
  const std::vector<RegistrationOutcome>& registrations() const { return registrations_; }
  // Domains currently registered on this agent's tunnels.
  std::set<std::string> live_domains() const;
  std::vector<sim::LinkId> links_with_role(const std::string& role) const;

  void on_message(sim::SimNet& net, const sim::SimMessage& msg) override;
  void on_link_closed(sim::SimNet& net, sim::LinkId link) override;

 private:
  enum class Role { Pull, Data, Control, Tunnel, Heartbeat, Internal };

  struct LinkState {
    Role role = Role::Data;
    std::size_t mapping = 0;         // Data
    sim::LinkId upstream = 0;        // Internal
    std::uint32_t stream = 0;        // Internal
    bool answered = false;           // Pull / Internal
    frame::FrameReader reader;
  };

  static const char* role_name(Role r);
  void close_links(sim::SimNet& net, bool keep_control);
  void on_pull_failure(sim::SimNet& net, AgentErrc err);
  void on_establish_failure(sim::SimNet& net, const std::string& why);
  void on_frames(sim::SimNet& net, sim::LinkId link);
  void on_tunnel_control(sim::SimNet& net, sim::LinkId link, const frame::TunnelFrame& f);
  void send_register(sim::SimNet& net, sim::LinkId link, const config::Mapping& mapping);
  void schedule_heartbeat(sim::SimNet& net, std::uint64_t generation);
  void reply_502(sim::SimNet& net, sim::LinkId upstream, std::uint32_t stream, const std::string& why);
  std::optional<config::Mapping> mapping_for(const std::string& host) const;

  std::string node_id_;
  AgentOptions options_;
  AgentState state_;
  std::map<sim::LinkId, LinkState> links_;
  std::uint64_t generation_ = 0;
  std::size_t pull_attempt_ = 0;
  std::size_t establish_attempt_ = 0;
  std::size_t config_pulls_ = 0;
  std::size_t invalid_data_events_ = 0;
  std::map<std::string, std::size_t> assigned_;  // Ngrok: server-assigned domain -> mapping index
  std::vector<RegistrationOutcome> registrations_;
  std::set<std::string> live_;
};

}  // namespace pfs::agent
