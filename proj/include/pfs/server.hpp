#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "pfs/config.hpp"
#include "pfs/frame.hpp"
#include "pfs/http.hpp"
#include "pfs/mitigation.hpp"
#include "pfs/simnet.hpp"

namespace pfs::server {

enum class ProviderStyle { NgrokStyle, OrayStyle };

const char* to_string(ProviderStyle s);
std::optional<ProviderStyle> parse_style(std::string_view s);

enum class Proto { Http, Https };

const char* to_string(Proto p);

enum class ServerErrc { MissingOrigin, Unauthorized, Duplicate, InvalidPolicy, UnknownDomain };

using ServerError = BasicError<ServerErrc>;

struct AccessPolicy {
  std::optional<std::pair<std::string, std::string>> basic_auth;
  std::vector<std::string> ip_allow;
  std::vector<std::string> ip_block;
  // ECMAScript regex searched in the User-Agent header; no match is a denial.
  std::optional<std::string> ua_filter;
};

struct AccessDecision {
  enum class Kind { Allow, Deny, DropConnection };
  Kind kind = Kind::Allow;
  int status = 0;
  std::string error_code;
  http::Response response;  // set for Deny
};

inline constexpr std::string_view kErrIpDenied = "ERR_NGROK_3205";
inline constexpr std::string_view kErrUaDenied = "ERR_NGROK_3211";

// Rules apply in a fixed order: IP lists, then the UA filter, then basic auth.
AccessDecision enforce_access_control(const AccessPolicy& policy, const std::string& visitor_ip,
                                      const std::optional<std::string>& user_agent,
                                      const std::optional<std::string>& auth_header, ProviderStyle style);

// Provider-generated page. Always carries "X-PFS-Error-Page: provider";
// "X-PFS-Error-Code" only when `code` is non-empty.
http::Response error_page(int status, std::string_view reason, std::string_view code, std::string_view message);

struct ForwardedRequest {
  std::string method;
  std::string path;
  http::Headers headers;
  std::string body;
  std::string x_forwarded_for;
  Proto x_forwarded_proto = Proto::Http;

  // Any inbound X-Forwarded-* headers are replaced, never appended to.
  http::Request to_http() const;
};

struct PfwRegistration {
  std::string pfw_domain;
  std::string agent_id;
  std::optional<sim::LinkId> tunnel_ref;
  ProviderStyle style = ProviderStyle::OrayStyle;
  AccessPolicy access_policy;
  std::optional<mitigation::SignedConfirmation> confirmation;
  config::Mapping mapping;

  bool online() const { return tunnel_ref.has_value(); }
};

struct Refusal {
  std::string agent_id;
  std::string pfw_domain;
  mitigation::VerifyStep step = mitigation::VerifyStep::None;
  std::string reason;
};

struct ServerOptions {
  std::string apex = "pfs.test";
  bool require_confirmation = false;
  std::uint64_t seed = 0;
  int http_port = 80;
  int https_port = 443;
  std::set<int> tunnel_ports = {6061, 4443};
  std::int64_t freshness_window = 300;
};

struct PublicOutcome {
  enum class Kind { Responded, Dropped, Relayed };
  Kind kind = Kind::Responded;
  http::Response response;
  std::uint32_t stream_id = 0;
};

class PfsServer : public sim::NodeBehavior {
 public:
  PfsServer(std::string node_id, ServerOptions options);

  const std::string& node_id() const { return node_id_; }
  const ServerOptions& options() const { return options_; }

  void add_agent(const std::string& agent_id, const std::string& token);
  bool authenticate(const std::string& agent_id, const std::string& token);
  void trust_tee(const mitigation::PublicKey& key) { verifier_.trust(key); }
  mitigation::ConfirmationVerifier& verifier() { return verifier_; }

  // Free-tier Ngrok-style names embed the origin IP:
  // "{4 hex}-{ip with '.'/':' replaced by '-'}.{apex}". Others are "{8 hex}.{apex}".
  std::string assign_domain(const std::string& agent_id, ProviderStyle style, bool free_tier,
                            const std::optional<std::string>& origin_ip);

  // Throws ServerError(Unauthorized) when confirmations are required and the
  // supplied one does not verify; the refusal is recorded and any previous
  // registration of that domain by the agent is withdrawn.
  const PfwRegistration& register_pfw(const std::string& agent_id, const config::Mapping& mapping,
                                      const std::optional<mitigation::SignedConfirmation>& confirmation,
                                      ProviderStyle style, std::optional<sim::LinkId> tunnel,
                                      std::int64_t now_seconds);

  void set_access_policy(const std::string& pfw_domain, AccessPolicy policy);

  // Routes one visitor request. Relayed requests are answered later, when the
  // agent's DataResponse arrives on the tunnel.
  PublicOutcome handle_public_request(sim::SimNet& net, const std::string& pfw_domain, std::string_view raw_request,
                                      const std::string& visitor_ip, Proto proto, sim::LinkId visitor_link);

  std::optional<PfwRegistration> lookup(const std::string& pfw_domain) const;
  std::vector<PfwRegistration> registrations() const;
  // Read-only view offered to visitors who want to check a PFW's authorization.
  std::optional<mitigation::SignedConfirmation> confirmation_for(const std::string& pfw_domain) const;
  const std::vector<Refusal>& refusals() const { return refusals_; }
  // Distinct tunnel links the agent's registrations ride on.
  std::set<sim::LinkId> tunnels_of(const std::string& agent_id) const;

  void on_message(sim::SimNet& net, const sim::SimMessage& msg) override;
  void on_link_closed(sim::SimNet& net, sim::LinkId link) override;

 private:
  struct Pending {
    sim::LinkId visitor_link;
    sim::LinkId tunnel;
    std::string domain;
  };

  void on_tunnel_bytes(sim::SimNet& net, const sim::SimMessage& msg);
  void on_control(sim::SimNet& net, sim::LinkId link, const frame::TunnelFrame& f);
  void on_public_bytes(sim::SimNet& net, const sim::SimMessage& msg);
  void send_control(sim::SimNet& net, sim::LinkId link, const nlohmann::ordered_json& msg);
  std::string random_hex(std::size_t digits);

  std::string node_id_;
  ServerOptions options_;
  std::mt19937_64 rng_;
  mitigation::ConfirmationVerifier verifier_;
  std::map<std::string, std::string> tokens_;
  std::set<std::string> authenticated_;
  std::set<std::string> assigned_;
  std::map<std::string, std::string> reserved_by_;
  mutable std::shared_mutex table_mu_;
  std::map<std::string, PfwRegistration> table_;
  std::map<std::string, AccessPolicy> policies_;
  std::vector<Refusal> refusals_;
  std::map<sim::LinkId, frame::FrameReader> readers_;
  std::map<sim::LinkId, std::string> sessions_;  // tunnel link -> authenticated agent
  std::map<std::uint32_t, Pending> pending_;
  std::uint32_t next_stream_ = 1;
};

}  // namespace pfs::server
