#include "pfs/attacks.hpp"

#include <algorithm>
#include <memory>

#include "pfs/frame.hpp"
#include "pfs/http.hpp"

namespace pfs::attacks {

using pfs::to_string;

namespace {

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string rewrite_payload(const std::string& payload, std::string_view match, std::string_view replace) {
  if (auto resp = http::parse_response(payload)) {
    std::string body = replace_all(resp->body, match, replace);
    if (body == resp->body) return payload;
    resp->body = std::move(body);
    http::set_header(resp->headers, "Content-Length", std::to_string(resp->body.size()));
    return http::serialize(*resp);
  }
  if (auto req = http::parse_request(payload)) {
    std::string body = replace_all(req->body, match, replace);
    if (body == req->body) return payload;
    req->body = std::move(body);
    http::set_header(req->headers, "Content-Length", std::to_string(req->body.size()));
    return http::serialize(*req);
  }
  return replace_all(payload, match, replace);
}

std::optional<std::string> mutate_config_text(const std::string& text, const ConfigMutator& mutator) {
  config::ForwardingConfig cfg;
  try {
    cfg = config::parse_config(text);
  } catch (const config::ConfigError&) {
    return std::nullopt;
  }
  return config::serialize_config(mutator(std::move(cfg)));
}

}  // namespace

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::DataPlaneMitm: return "mitm-data";
    case AttackKind::ConfigInjection: return "inject-config";
    case AttackKind::RestartTrigger: return "restart-trigger";
  }
  return "unknown";
}

std::optional<AttackKind> parse_attack(std::string_view s) {
  if (s == "mitm-data") return AttackKind::DataPlaneMitm;
  if (s == "inject-config") return AttackKind::ConfigInjection;
  if (s == "restart-trigger") return AttackKind::RestartTrigger;
  return std::nullopt;
}

sim::Interceptor mitm_rewrite_data(Bytes match, Bytes replace) {
  return [match = to_string(match), replace = to_string(replace)](const sim::InterceptContext&,
                                                                  ByteView bytes) -> sim::InterceptDecision {
    Bytes out;
    bool changed = false;
    std::size_t offset = 0;
    while (offset < bytes.size()) {
      frame::Decoded d;
      try {
        d = frame::decode_frame(bytes.subspan(offset));
      } catch (const frame::CodecError&) {
        return sim::InterceptDecision::pass();
      }
      offset += d.consumed;
      frame::TunnelFrame f = std::move(d.frame);
      if (f.frame_type == frame::FrameType::DataRequest || f.frame_type == frame::FrameType::DataResponse) {
        const std::string before = to_string(f.payload);
        const std::string after = rewrite_payload(before, match, replace);
        if (after != before) {
          changed = true;
          f = frame::make_frame(f.frame_type, f.stream_id, to_bytes(after));
        }
      }
      const Bytes enc = frame::encode_frame(f);
      out.insert(out.end(), enc.begin(), enc.end());
    }
    return changed ? sim::InterceptDecision::rewrite(std::move(out)) : sim::InterceptDecision::pass();
  };
}

sim::Interceptor inject_malicious_config(ConfigMutator mutator, std::size_t skip) {
  auto seen = std::make_shared<std::size_t>(0);
  return [mutator = std::move(mutator), skip, seen](const sim::InterceptContext&,
                                                    ByteView bytes) -> sim::InterceptDecision {
    // Update channel: a ControlUpdate frame whose payload is a configuration.
    try {
      const frame::Decoded d = frame::decode_frame(bytes);
      if (d.consumed != bytes.size() || d.frame.frame_type != frame::FrameType::ControlUpdate) {
        return sim::InterceptDecision::pass();
      }
      const auto mutated = mutate_config_text(to_string(d.frame.payload), mutator);
      if (!mutated || (*seen)++ < skip) return sim::InterceptDecision::pass();
      return sim::InterceptDecision::rewrite(frame::encode_frame(
          frame::make_frame(frame::FrameType::ControlUpdate, d.frame.stream_id, to_bytes(*mutated))));
    } catch (const frame::CodecError&) {
    }
    // Initial pull: an HTTP response whose body is a configuration.
    auto resp = http::parse_response(to_string(bytes));
    if (!resp) return sim::InterceptDecision::pass();
    const auto mutated = mutate_config_text(resp->body, mutator);
    if (!mutated || (*seen)++ < skip) return sim::InterceptDecision::pass();
    resp->body = *mutated;
    http::set_header(resp->headers, "Content-Length", std::to_string(resp->body.size()));
    return sim::InterceptDecision::rewrite(to_bytes(http::serialize(*resp)));
  };
}

sim::Interceptor trigger_agent_restart(TriggerOptions options) {
  auto remaining = std::make_shared<std::size_t>(options.count);
  return [options = std::move(options), remaining](const sim::InterceptContext& ctx,
                                                   ByteView bytes) -> sim::InterceptDecision {
    if (*remaining == 0 || ctx.now < options.after) return sim::InterceptDecision::pass();
    if (!options.victim.empty() && ctx.to != options.victim) return sim::InterceptDecision::pass();
    --*remaining;
    Bytes out = options.garbage;
    out.insert(out.end(), bytes.begin(), bytes.end());
    return sim::InterceptDecision::rewrite(std::move(out));
  };
}

ConfigMutator redirect_service(std::string servicehost, int serviceport, std::size_t mapping) {
  return [=](config::ForwardingConfig cfg) {
    if (mapping < cfg.mappings.size()) {
      cfg.mappings[mapping].servicehost = servicehost;
      cfg.mappings[mapping].serviceport = serviceport;
    }
    return cfg;
  };
}

ConfigMutator redirect_server(std::string serverhost, int serverport, std::size_t mapping) {
  return [=](config::ForwardingConfig cfg) {
    if (mapping < cfg.mappings.size()) {
      cfg.mappings[mapping].server.serverhost = serverhost;
      cfg.mappings[mapping].server.serverport = serverport;
    }
    return cfg;
  };
}

ConfigMutator redirect_phsl(std::string phsl) {
  return [phsl = std::move(phsl)](config::ForwardingConfig cfg) {
    cfg.phsl = phsl;
    return cfg;
  };
}

ConfigMutator set_fields(std::map<std::string, config::Json> fields) {
  return [fields = std::move(fields)](config::ForwardingConfig cfg) {
    for (const auto& [path, value] : fields) config::set_field(cfg, path, value);
    return cfg;
  };
}

bool victim_observable(const sim::EventTrace& trace) {
  static const std::vector<std::string> kLabels = {"bad-mac", "bad-header", "agent-restart", "server-invalid-data",
                                                   "config-parse-error", "config-invalid", "bad-config"};
  return std::any_of(trace.begin(), trace.end(), [](const sim::TraceEvent& ev) {
    return ev.kind == "note" && std::find(kLabels.begin(), kLabels.end(), ev.label) != kLabels.end();
  });
}

AttackReport make_report(AttackKind kind, const std::string& hook_name, const sim::EventTrace& trace,
                         bool effect_observed) {
  AttackReport r;
  r.attack = kind;
  for (const sim::TraceEvent& ev : trace) {
    if (ev.kind == "rewrite" && ev.summary == hook_name) r.evidence.push_back(ev);
  }
  r.succeeded = effect_observed && !r.evidence.empty();
  r.victim_observable = victim_observable(trace);
  return r;
}

}  // namespace pfs::attacks
