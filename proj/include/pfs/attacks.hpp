#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pfs/config.hpp"
#include "pfs/simnet.hpp"

// On-path attacks against the Oray-style protocol, expressed as simnet
// interceptors. Whether they work is decided by the link's channel security,
// not by the hooks themselves.
namespace pfs::attacks {

enum class AttackKind { DataPlaneMitm, ConfigInjection, RestartTrigger };

const char* to_string(AttackKind k);
std::optional<AttackKind> parse_attack(std::string_view s);

struct AttackReport {
  AttackKind attack = AttackKind::DataPlaneMitm;
  bool succeeded = false;
  std::vector<sim::TraceEvent> evidence;
  bool victim_observable = false;
};

// Replaces `match` with `replace` in DataRequest/DataResponse payloads and
// re-encodes each frame with a recomputed MAC. HTTP payloads are edited in
// the body and Content-Length is fixed up; other payloads are edited raw.
sim::Interceptor mitm_rewrite_data(Bytes match, Bytes replace);

using ConfigMutator = std::function<config::ForwardingConfig(config::ForwardingConfig)>;

// Rewrites forwarding configurations in flight, whether carried in an HTTP
// response body (initial pull) or a ControlUpdate frame (update channel).
// The first `skip` configurations seen are let through untouched.
sim::Interceptor inject_malicious_config(ConfigMutator mutator, std::size_t skip = 0);

struct TriggerOptions {
  std::string victim;           // only messages addressed to this node; empty = any
  std::size_t count = 1;        // number of injections
  sim::SimTime after = 0;       // no injections before this time
  Bytes garbage = to_bytes(std::string_view("\x00\xff" "GARBAGE\x13\x37", 11));
};

// Prepends a burst of non-frame bytes to the victim's inbound data stream.
sim::Interceptor trigger_agent_restart(TriggerOptions options);

ConfigMutator redirect_service(std::string servicehost, int serviceport, std::size_t mapping = 0);
ConfigMutator redirect_server(std::string serverhost, int serverport, std::size_t mapping = 0);
ConfigMutator redirect_phsl(std::string phsl);
// Applies each path -> value with config::set_field, in path order.
ConfigMutator set_fields(std::map<std::string, config::Json> fields);

// True when the trace shows anything a victim could notice: decode errors,
// config rejections, or agent restarts.
bool victim_observable(const sim::EventTrace& trace);

// Evidence is every rewrite the named hook got through. A report only counts
// as a success when the caller observed the attack's effect and the hook
// actually tampered with traffic.
AttackReport make_report(AttackKind kind, const std::string& hook_name, const sim::EventTrace& trace,
                         bool effect_observed);

}  // namespace pfs::attacks
