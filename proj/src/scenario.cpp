#include "pfs/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "pfs/agent.hpp"
#include "pfs/mitigation.hpp"
#include "pfs/server.hpp"
#include "pfs/services.hpp"

namespace pfs::scenario {

namespace {

const std::set<std::string> kDefiningOps = {"service", "control", "server", "tee", "agent", "visitor", "node"};
const std::set<std::string> kChecks = {"visit-body", "visit-status", "visit-dropped", "service-hits", "trace",
                                       "restart-count", "config-pulls", "agent-config", "agent-phase", "link",
                                       "registered", "refused", "attack", "violations"};

std::string step_name(std::size_t i, const Json& step) {
  return "step " + std::to_string(i) + " (" + step.value("op", std::string("?")) + ")";
}

class Validator {
 public:
  std::vector<std::string> run(const ScenarioSpec& spec) {
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
      const Json& step = spec.steps[i];
      where_ = "step " + std::to_string(i);
      if (!step.is_object() || !step.contains("op") || !step["op"].is_string()) {
        problem("not an object with a string \"op\"");
        continue;
      }
      where_ = step_name(i, step);
      check_step(step);
    }
    return problems_;
  }

 private:
  void problem(const std::string& what) { problems_.push_back(where_ + ": " + what); }

  bool need(const Json& j, const char* field) {
    if (j.contains(field)) return true;
    problem(std::string("missing \"") + field + "\"");
    return false;
  }

  void ref(const Json& j, const char* field, const std::set<std::string>& kinds, bool required) {
    if (!j.contains(field)) {
      if (required) problem(std::string("missing \"") + field + "\"");
      return;
    }
    if (!j[field].is_string()) {
      problem(std::string("\"") + field + "\" must be a node id");
      return;
    }
    node(j[field].get<std::string>(), kinds);
  }

  void node(const std::string& id, const std::set<std::string>& kinds) {
    const auto it = defined_.find(id);
    if (it == defined_.end()) {
      problem("node \"" + id + "\" is not defined");
    } else if (!kinds.empty() && !kinds.contains(it->second)) {
      problem("\"" + id + "\" is a " + it->second + " node");
    }
  }

  void security(const Json& j, const char* field) {
    if (j.contains(field) && (!j[field].is_string() || !sim::parse_security(j[field].get<std::string>()))) {
      problem(std::string("\"") + field + "\" must be plain, tls-noverify or tls-verified");
    }
  }

  void check_expect(const Json& j) {
    if (!j.is_object() || !need(j, "check")) return;
    const std::string check = j["check"].is_string() ? j["check"].get<std::string>() : "";
    if (!kChecks.contains(check)) {
      problem("unknown check \"" + check + "\"");
      return;
    }
    if (check.starts_with("visit-")) ref(j, "visitor", {"visitor"}, true);
    if (check == "service-hits") ref(j, "node", {"service"}, true);
    if (check == "restart-count" || check == "config-pulls" || check == "agent-config" || check == "agent-phase") {
      ref(j, "agent", {"agent"}, true);
    }
    if (check == "agent-config") need(j, "field");
    if (check == "registered") {
      ref(j, "server", {"server"}, true);
      need(j, "domain");
    }
    if (check == "refused") ref(j, "server", {"server"}, true);
    if (check == "link") {
      ref(j, "a", {}, true);
      ref(j, "b", {}, true);
    }
    if (check == "trace") {
      ref(j, "from", {}, false);
      ref(j, "to", {}, false);
    }
    if (check == "attack" && need(j, "attack")) {
      if (!j["attack"].is_string() || !attacks_.contains(j["attack"].get<std::string>())) {
        problem("attack \"" + j["attack"].dump() + "\" is not installed");
      }
    }
  }

  void check_step(const Json& s) {
    const std::string op = s["op"].get<std::string>();
    if (kDefiningOps.contains(op)) {
      if (!need(s, "id")) return;
      if (!s["id"].is_string() || s["id"].get<std::string>().empty()) {
        problem("\"id\" must be a non-empty string");
        return;
      }
      const std::string id = s["id"].get<std::string>();
      if (defined_.contains(id)) problem("node \"" + id + "\" defined twice");
      for (const char* list : {"addresses", "bind", "trust", "agents"}) {
        if (s.contains(list) && !s[list].is_array()) problem(std::string("\"") + list + "\" must be an array");
      }
      if (op == "server" && s.contains("trust") && s["trust"].is_array()) {
        for (const Json& t : s["trust"]) {
          if (t.is_string()) node(t.get<std::string>(), {"tee"});
        }
      }
      if (op == "agent") {
        ref(s, "tee", {"tee"}, false);
        if (s.contains("style") && !server::parse_style(s.value("style", std::string()))) {
          problem("\"style\" must be oray or ngrok");
        }
        for (const char* f : {"pull_security", "data_security", "update_security", "tunnel_security"}) security(s, f);
      }
      defined_[id] = op;
      return;
    }
    if (op == "attack") {
      if (need(s, "kind") && (!s["kind"].is_string() || !attacks::parse_attack(s["kind"].get<std::string>()))) {
        problem("unknown attack kind " + s["kind"].dump());
      }
      if (need(s, "between")) {
        if (!s["between"].is_array() || s["between"].size() != 2 || !s["between"][0].is_string() ||
            !s["between"][1].is_string()) {
          problem("\"between\" must name two nodes");
        } else {
          node(s["between"][0].get<std::string>(), {});
          node(s["between"][1].get<std::string>(), {});
        }
      }
      ref(s, "victim", {}, false);
      const std::string id = s.value("id", s.value("kind", std::string()));
      if (!attacks_.insert(id).second) problem("attack \"" + id + "\" installed twice");
      if (s.contains("effect")) check_expect(s["effect"]);
    } else if (op == "start") {
      ref(s, "agent", {"agent"}, true);
    } else if (op == "run") {
      if (s.contains("for") && (!s["for"].is_number() || s["for"].get<double>() < 0)) {
        problem("\"for\" must be a non-negative number of seconds");
      }
    } else if (op == "visit") {
      ref(s, "visitor", {"visitor"}, true);
      need(s, "host");
    } else if (op == "push-update") {
      ref(s, "control", {"control"}, true);
    } else if (op == "tee-presence") {
      ref(s, "tee", {"tee"}, true);
      need(s, "presence");
    } else if (op == "policy") {
      ref(s, "server", {"server"}, true);
      need(s, "domain");
    } else if (op == "expect") {
      check_expect(s);
    } else {
      problem("unknown op");
    }
  }

  std::string where_;
  std::vector<std::string> problems_;
  std::map<std::string, std::string> defined_;  // node id -> defining op
  std::set<std::string> attacks_;
};

struct InstalledAttack {
  std::string id;
  attacks::AttackKind kind;
  Json effect;
};

std::string fmt_time(sim::SimTime t) {
  std::ostringstream out;
  out << "[" << std::fixed << std::setprecision(3) << std::setw(8) << sim::to_seconds(t) << "s] ";
  return out.str();
}

std::vector<std::string> strings(const Json& j, const char* field) {
  std::vector<std::string> out;
  if (j.contains(field)) {
    for (const Json& v : j[field]) out.push_back(v.get<std::string>());
  }
  return out;
}

sim::ChannelSecurity security_of(const Json& j, const char* field, sim::ChannelSecurity fallback) {
  if (!j.contains(field)) return fallback;
  return *sim::parse_security(j[field].get<std::string>());
}

std::string config_text_of(const Json& s) {
  if (s.contains("config_text")) return s["config_text"].get<std::string>();
  if (s.contains("config")) return s["config"].dump(2);
  return config::serialize_config(demo_config());
}

class Runner {
 public:
  explicit Runner(const ScenarioSpec& spec)
      : spec_(spec), net_(sim::SimOptions{spec.seed, 1'000'000, sim::ViolationPolicy::Record, 0.0}) {}

  ScenarioResult run() {
    ScenarioResult result;
    say("scenario " + spec_.name + " seed " + std::to_string(spec_.seed));
    for (std::size_t i = 0; i < spec_.steps.size(); ++i) {
      const Json& step = spec_.steps[i];
      try {
        execute(step);
      } catch (const std::exception& e) {
        fail(step_name(i, step) + " aborted: " + e.what());
        break;
      }
    }
    for (const InstalledAttack& a : attacks_) {
      const attacks::AttackReport r = report(a);
      say("attack " + a.id + " (" + attacks::to_string(a.kind) + "): " + (r.succeeded ? "succeeded" : "failed") +
          ", " + std::to_string(r.evidence.size()) + " rewrites, victim " +
          (r.victim_observable ? "noticed" : "did not notice"));
      result.reports.push_back(r);
    }
    say(failures_.empty() ? "outcome: as expected" : "outcome: " + std::to_string(failures_.size()) + " expectation(s) failed");
    result.exit_code = failures_.empty() ? 0 : 1;
    result.trace = net_.trace();
    result.transcript = std::move(transcript_);
    result.failures = std::move(failures_);
    return result;
  }

 private:
  void say(const std::string& line) { transcript_.push_back(fmt_time(net_.now()) + line); }
  void fail(const std::string& why) {
    failures_.push_back(why);
    say("FAIL " + why);
  }

  void add_node(const Json& s) {
    const std::string id = s["id"].get<std::string>();
    net_.add_node(id, strings(s, "addresses"));
    for (const std::string& ep : strings(s, "bind")) net_.bind(ep, id);
  }

  void execute(const Json& s) {
    const std::string op = s["op"].get<std::string>();
    if (op == "service") {
      add_node(s);
      const std::string id = s["id"].get<std::string>();
      services_[id] = services::HttpService::fixed(id, s.value("status", 200), s.value("body", std::string("OK")));
      net_.set_behavior(id, services_[id]);
    } else if (op == "control") {
      add_node(s);
      const std::string id = s["id"].get<std::string>();
      controls_[id] = std::make_shared<services::ControlServer>(id, config_text_of(s));
      net_.set_behavior(id, controls_[id]);
    } else if (op == "server") {
      add_server(s);
    } else if (op == "tee") {
      const std::string id = s["id"].get<std::string>();
      auto tee = std::make_shared<mitigation::SimulatedTee>(s.value("key_id", id), s.value("seed", spec_.seed + 1));
      tee->set_physical_presence(s.value("presence", true));
      tees_[id] = tee;
    } else if (op == "agent") {
      add_agent(s);
    } else if (op == "visitor") {
      add_node(s);
      const std::string id = s["id"].get<std::string>();
      visitors_[id] = std::make_shared<services::Visitor>(id);
      net_.set_behavior(id, visitors_[id]);
    } else if (op == "node") {
      add_node(s);
    } else if (op == "attack") {
      add_attack(s);
    } else if (op == "start") {
      const std::string id = s["agent"].get<std::string>();
      say("start " + id);
      agents_.at(id)->start(net_);
    } else if (op == "run") {
      if (s.value("idle", false)) {
        net_.run_until_idle();
      } else {
        net_.run_until(net_.now() + sim::seconds(s.value("for", 10.0)));
      }
    } else if (op == "visit") {
      visit(s);
    } else if (op == "push-update") {
      const std::string id = s["control"].get<std::string>();
      const std::size_t n = s.contains("raw")
                                ? controls_.at(id)->push_raw(net_, to_bytes(s["raw"].get<std::string>()))
                                : controls_.at(id)->push_update(net_, config_text_of(s));
      say("push-update from " + id + " to " + std::to_string(n) + " subscriber(s)");
    } else if (op == "tee-presence") {
      tees_.at(s["tee"].get<std::string>())->set_physical_presence(s["presence"].get<bool>());
    } else if (op == "policy") {
      server::AccessPolicy p;
      if (s.contains("basic_auth")) p.basic_auth = {s["basic_auth"][0].get<std::string>(), s["basic_auth"][1].get<std::string>()};
      p.ip_allow = strings(s, "ip_allow");
      p.ip_block = strings(s, "ip_block");
      if (s.contains("ua_filter")) p.ua_filter = s["ua_filter"].get<std::string>();
      servers_.at(s["server"].get<std::string>())->set_access_policy(s["domain"].get<std::string>(), p);
    } else if (op == "expect") {
      const auto failure = evaluate(s);
      const std::string what = s.contains("label") ? s["label"].get<std::string>() : s.dump();
      if (failure) {
        fail(what + ": " + *failure);
      } else {
        say("ok " + what);
      }
    }
  }

  void add_server(const Json& s) {
    add_node(s);
    const std::string id = s["id"].get<std::string>();
    server::ServerOptions o;
    o.apex = s.value("apex", o.apex);
    o.require_confirmation = s.value("require_confirmation", false);
    o.seed = s.value("seed", spec_.seed);
    o.freshness_window = s.value("freshness_window", o.freshness_window);
    auto srv = std::make_shared<server::PfsServer>(id, o);
    if (s.contains("agents")) {
      for (const Json& a : s["agents"]) srv->add_agent(a.at("agent_id").get<std::string>(), a.at("token").get<std::string>());
    }
    for (const std::string& t : strings(s, "trust")) srv->trust_tee(tees_.at(t)->public_key());
    servers_[id] = srv;
    net_.set_behavior(id, srv);
  }

  void add_agent(const Json& s) {
    add_node(s);
    const std::string id = s["id"].get<std::string>();
    agent::AgentOptions o;
    o.agent_id = s.value("agent_id", id);
    o.token = s.value("token", std::string());
    if (s.contains("style")) o.style = *server::parse_style(s["style"].get<std::string>());
    o.control_endpoint = s.value("control_endpoint", o.control_endpoint);
    o.tunnel_endpoint = s.value("tunnel_endpoint", o.tunnel_endpoint);
    o.pull_security = security_of(s, "pull_security", o.pull_security);
    o.data_security = security_of(s, "data_security", o.data_security);
    o.update_security = security_of(s, "update_security", o.update_security);
    o.tunnel_security = security_of(s, "tunnel_security", o.tunnel_security);
    o.free_tier = s.value("free_tier", o.free_tier);
    o.heartbeat_interval = sim::seconds(s.value("heartbeat", 30.0));
    if (s.contains("tee")) o.tee = tees_.at(s["tee"].get<std::string>());
    if (s.contains("consent")) o.consent = consent_of(s["consent"]);
    auto a = std::make_shared<agent::PfsAgent>(id, o);
    if (s.contains("config")) a->set_local_config(config::parse_config(s["config"].dump()));
    agents_[id] = a;
    net_.set_behavior(id, a);
  }

  static agent::Consent consent_of(const Json& c) {
    using mitigation::Decision;
    if (c.is_string()) {
      const Decision d = c.get<std::string>() == "deny" ? Decision::Denied : Decision::Granted;
      return [d](const mitigation::ConfirmationDialog&) { return d; };
    }
    // {"grant_if": {"servicehost": ..., "serviceport": ...}}: the owner only
    // approves the mapping they actually set up.
    const Json want = c.at("grant_if");
    return [want](const mitigation::ConfirmationDialog& d) {
      const bool host_ok = !want.contains("servicehost") || want["servicehost"].get<std::string>() == d.servicehost;
      const bool port_ok = !want.contains("serviceport") || want["serviceport"].get<int>() == d.serviceport;
      return host_ok && port_ok ? Decision::Granted : Decision::Denied;
    };
  }

  void add_attack(const Json& s) {
    const attacks::AttackKind kind = *attacks::parse_attack(s["kind"].get<std::string>());
    const std::string id = s.value("id", s["kind"].get<std::string>());
    sim::Interceptor hook;
    switch (kind) {
      case attacks::AttackKind::DataPlaneMitm:
        hook = attacks::mitm_rewrite_data(to_bytes(s.value("match", std::string("OK"))),
                                          to_bytes(s.value("replace", std::string("PWNED"))));
        break;
      case attacks::AttackKind::ConfigInjection: {
        std::map<std::string, Json> fields;
        if (s.contains("set")) {
          for (const auto& [path, value] : s["set"].items()) fields[path] = value;
        }
        hook = attacks::inject_malicious_config(attacks::set_fields(std::move(fields)), s.value("skip", std::size_t{0}));
        break;
      }
      case attacks::AttackKind::RestartTrigger: {
        attacks::TriggerOptions t;
        t.victim = s.value("victim", std::string());
        t.count = s.value("count", std::size_t{1});
        t.after = sim::seconds(s.value("after", 0.0));
        if (s.contains("garbage")) t.garbage = to_bytes(s["garbage"].get<std::string>());
        hook = attacks::trigger_agent_restart(std::move(t));
        break;
      }
    }
    const std::string a = s["between"][0].get<std::string>();
    const std::string b = s["between"][1].get<std::string>();
    net_.install_path_interceptor(a, b, id, std::move(hook));
    attacks_.push_back({id, kind, s.contains("effect") ? s["effect"] : Json()});
    say("attack " + id + " (" + attacks::to_string(kind) + ") on path " + a + " <-> " + b);
  }

  void visit(const Json& s) {
    const std::string id = s["visitor"].get<std::string>();
    http::Request req;
    req.method = s.value("method", req.method);
    req.target = s.value("path", req.target);
    if (s.contains("headers")) {
      for (const auto& [k, v] : s["headers"].items()) req.headers.emplace_back(k, v.get<std::string>());
    }
    req.body = s.value("body", std::string());
    if (!req.body.empty()) http::set_header(req.headers, "Content-Length", std::to_string(req.body.size()));
    const std::string host = s["host"].get<std::string>();
    const bool https = s.value("https", false);
    const std::size_t index = visitors_.at(id)->visit(net_, host, req, https);
    say("visit #" + std::to_string(index) + " " + id + " -> " + (https ? "https://" : "http://") + host + req.target);
  }

  attacks::AttackReport report(const InstalledAttack& a) {
    const bool effect = a.effect.is_null() || !evaluate(a.effect).has_value();
    return attacks::make_report(a.kind, a.id, net_.trace(), effect);
  }

  // Compares `actual` with the first of equals/contains/at_least/at_most
  // present in `check`, or with `fallback` when none is.
  static std::optional<std::string> compare(const Json& actual, const Json& check, const Json& fallback) {
    const auto mismatch = [&](const std::string& want) {
      return std::optional<std::string>("expected " + want + ", got " + actual.dump());
    };
    if (check.contains("equals")) {
      if (actual != check["equals"]) return mismatch(check["equals"].dump());
    } else if (check.contains("contains")) {
      const std::string needle = check["contains"].get<std::string>();
      if (!actual.is_string() || actual.get<std::string>().find(needle) == std::string::npos) {
        return mismatch("a string containing " + check["contains"].dump());
      }
    } else if (check.contains("at_least") || check.contains("at_most")) {
      if (!actual.is_number()) return mismatch("a number");
      if (check.contains("at_least") && actual.get<double>() < check["at_least"].get<double>()) {
        return mismatch(">= " + check["at_least"].dump());
      }
      if (check.contains("at_most") && actual.get<double>() > check["at_most"].get<double>()) {
        return mismatch("<= " + check["at_most"].dump());
      }
    } else if (actual != fallback) {
      return mismatch(fallback.dump());
    }
    return std::nullopt;
  }

  const services::Visit* visit_of(const Json& c) {
    const auto& visits = visitors_.at(c["visitor"].get<std::string>())->visits();
    const long long n = static_cast<long long>(visits.size());
    long long i = c.value("visit", -1LL);
    if (i < 0) i += n;
    if (i < 0 || i >= n) return nullptr;
    return &visits[static_cast<std::size_t>(i)];
  }

  std::optional<std::string> evaluate(const Json& c) {
    const std::string check = c["check"].get<std::string>();
    if (check.starts_with("visit-")) {
      const services::Visit* v = visit_of(c);
      if (!v) return "no such visit";
      const auto resp = v->response ? http::parse_response(*v->response) : std::nullopt;
      if (check == "visit-body") return compare(resp ? Json(resp->body) : Json(), c, Json(""));
      if (check == "visit-status") return compare(resp ? Json(resp->status) : Json(), c, Json(200));
      return compare(Json(v->dropped || v->unreachable), c, Json(true));
    }
    if (check == "service-hits") {
      return compare(Json(services_.at(c["node"].get<std::string>())->received().size()), c, Json(1));
    }
    if (check == "trace") {
      std::size_t n = 0;
      for (const sim::TraceEvent& ev : net_.trace()) {
        if (c.contains("kind") && ev.kind != c["kind"].get<std::string>()) continue;
        if (c.contains("event_label") && ev.label != c["event_label"].get<std::string>()) continue;
        if (c.contains("from") && ev.sender != c["from"].get<std::string>()) continue;
        if (c.contains("to") && ev.receiver != c["to"].get<std::string>()) continue;
        if (c.contains("summary_contains") &&
            ev.summary.find(c["summary_contains"].get<std::string>()) == std::string::npos) {
          continue;
        }
        ++n;
      }
      const bool bounded = c.contains("equals") || c.contains("at_least") || c.contains("at_most");
      return compare(Json(n), bounded ? c : Json{{"at_least", 1}}, Json());
    }
    if (check == "restart-count") {
      return compare(Json(agents_.at(c["agent"].get<std::string>())->state().restart_count), c, Json(0));
    }
    if (check == "config-pulls") {
      return compare(Json(agents_.at(c["agent"].get<std::string>())->config_pulls()), c, Json(1));
    }
    if (check == "agent-config") {
      const auto& cfg = agents_.at(c["agent"].get<std::string>())->state().config;
      return compare(cfg ? config::get_field(*cfg, c["field"].get<std::string>()) : Json(), c, Json());
    }
    if (check == "agent-phase") {
      return compare(Json(agent::to_string(agents_.at(c["agent"].get<std::string>())->state().phase)), c,
                     Json("TunnelUp"));
    }
    if (check == "link") {
      const std::string a = c["a"].get<std::string>();
      const std::string b = c["b"].get<std::string>();
      bool found = false;
      for (const auto& [id, l] : net_.links()) {
        const bool ends = (l.endpoint_a == a && l.endpoint_b == b) || (l.endpoint_a == b && l.endpoint_b == a);
        if (!ends) continue;
        if (c.contains("open") && l.open != c["open"].get<bool>()) continue;
        if (c.contains("dialed") && l.dialed != c["dialed"].get<std::string>()) continue;
        found = true;
      }
      return compare(Json(found), c, Json(true));
    }
    if (check == "registered") {
      const auto r = servers_.at(c["server"].get<std::string>())->lookup(c["domain"].get<std::string>());
      return compare(Json(r && r->online()), c, Json(true));
    }
    if (check == "refused") {
      bool found = false;
      for (const server::Refusal& r : servers_.at(c["server"].get<std::string>())->refusals()) {
        if (c.contains("domain") && r.pfw_domain != c["domain"].get<std::string>()) continue;
        if (c.contains("step") && mitigation::to_string(r.step) != c["step"].get<std::string>()) continue;
        found = true;
      }
      return compare(Json(found), c, Json(true));
    }
    if (check == "attack") {
      const std::string id = c["attack"].get<std::string>();
      for (const InstalledAttack& a : attacks_) {
        if (a.id != id) continue;
        const attacks::AttackReport r = report(a);
        if (c.contains("succeeded") && r.succeeded != c["succeeded"].get<bool>()) {
          return "expected succeeded=" + c["succeeded"].dump() + ", got " + (r.succeeded ? "true" : "false");
        }
        if (c.contains("victim_observable") && r.victim_observable != c["victim_observable"].get<bool>()) {
          return "expected victim_observable=" + c["victim_observable"].dump() + ", got " +
                 (r.victim_observable ? "true" : "false");
        }
        return std::nullopt;
      }
      return "attack " + id + " not installed yet";
    }
    if (check == "violations") return compare(Json(net_.violations()), c, Json(0));
    return "unknown check " + check;
  }

  const ScenarioSpec& spec_;
  sim::SimNet net_;
  std::map<std::string, std::shared_ptr<services::HttpService>> services_;
  std::map<std::string, std::shared_ptr<services::ControlServer>> controls_;
  std::map<std::string, std::shared_ptr<server::PfsServer>> servers_;
  std::map<std::string, std::shared_ptr<mitigation::SimulatedTee>> tees_;
  std::map<std::string, std::shared_ptr<agent::PfsAgent>> agents_;
  std::map<std::string, std::shared_ptr<services::Visitor>> visitors_;
  std::vector<InstalledAttack> attacks_;
  std::vector<std::string> transcript_;
  std::vector<std::string> failures_;
};

// Shared topology of the built-ins: an Oray-style agent in a private
// network next to the honest web service and a "secret" one, the provider's
// control and relay servers, an attacker-run control server, and a visitor.
Json topology(bool require_confirmation) {
  Json steps = Json::array();
  steps.push_back({{"op", "service"}, {"id", "web"}, {"addresses", {"127.0.0.1"}}, {"bind", {"127.0.0.1:8001"}},
                   {"body", "OK"}});
  steps.push_back({{"op", "service"}, {"id", "secret"}, {"addresses", {"10.0.0.7"}}, {"bind", {"10.0.0.7:8080"}},
                   {"body", "SECRET"}});
  steps.push_back({{"op", "control"}, {"id", "control"}, {"addresses", {"203.0.113.10"}},
                   {"bind", {"hsk-embed.oray.net:443", "demo.oray.net:6061"}}});
  steps.push_back({{"op", "control"}, {"id", "attacker"}, {"addresses", {"203.0.113.66"}},
                   {"bind", {"evil.attacker.test:6061"}}});
  if (require_confirmation) {
    steps.push_back({{"op", "tee"}, {"id", "tee"}, {"presence", true}});
  }
  Json srv{{"op", "server"},
           {"id", "pfs"},
           {"addresses", {"203.0.113.20"}},
           {"bind", {"phfw-overseasvip.oray.net:6061", "*.xicp.fun:80", "*.xicp.fun:443"}},
           {"apex", "xicp.fun"},
           {"agents", {{{"agent_id", "demo-agent"}, {"token", "demo-token"}}}}};
  if (require_confirmation) {
    srv["require_confirmation"] = true;
    srv["trust"] = {"tee"};
  }
  steps.push_back(srv);
  Json ag{{"op", "agent"},
          {"id", "agent"},
          {"addresses", {"192.168.1.20"}},
          {"agent_id", "demo-agent"},
          {"token", "demo-token"},
          {"style", "oray"},
          {"control_endpoint", "hsk-embed.oray.net:443"},
          {"pull_security", "tls-noverify"},
          {"data_security", "plain"},
          {"update_security", "plain"}};
  if (require_confirmation) {
    ag["tee"] = "tee";
    ag["consent"] = {{"grant_if", {{"servicehost", "127.0.0.1"}, {"serviceport", 8001}}}};
  }
  steps.push_back(ag);
  steps.push_back({{"op", "visitor"}, {"id", "visitor"}, {"addresses", {"198.51.100.7"}}});
  return steps;
}

Json expect(Json fields) {
  fields["op"] = "expect";
  return fields;
}

Json visit_step() { return {{"op", "visit"}, {"visitor", "visitor"}, {"host", "demo.xicp.fun"}, {"path", "/"}}; }

Json run_step(double secs) { return {{"op", "run"}, {"for", secs}}; }

Json builtin_mitm_data() {
  Json steps = topology(false);
  steps.push_back({{"op", "attack"},
                   {"id", "mitm"},
                   {"kind", "mitm-data"},
                   {"between", {"agent", "pfs"}},
                   {"match", "OK"},
                   {"replace", "PWNED"},
                   {"effect", {{"check", "visit-body"}, {"visitor", "visitor"}, {"equals", "PWNED"}}}});
  steps.push_back({{"op", "start"}, {"agent", "agent"}});
  steps.push_back(run_step(1));
  steps.push_back(visit_step());
  steps.push_back(run_step(1));
  steps.push_back(expect({{"label", "visitor received the rewritten body"}, {"check", "visit-body"},
                          {"visitor", "visitor"}, {"equals", "PWNED"}}));
  steps.push_back(expect({{"label", "no MAC failure anywhere"}, {"check", "trace"}, {"kind", "note"},
                          {"event_label", "bad-mac"}, {"equals", 0}}));
  steps.push_back(expect({{"label", "agent never restarted"}, {"check", "restart-count"}, {"agent", "agent"},
                          {"equals", 0}}));
  steps.push_back(expect({{"label", "attack succeeded unnoticed"}, {"check", "attack"}, {"attack", "mitm"},
                          {"succeeded", true}, {"victim_observable", false}}));
  return {{"name", "mitm-data"}, {"seed", 1}, {"steps", steps}};
}

Json builtin_inject_config() {
  Json steps = topology(false);
  steps.push_back({{"op", "attack"},
                   {"id", "inject"},
                   {"kind", "inject-config"},
                   {"between", {"agent", "control"}},
                   {"set",
                    {{"mappings[0].servicehost", "10.0.0.7"},
                     {"mappings[0].serviceport", 8080},
                     {"phsl", "evil.attacker.test:6061"}}},
                   {"effect", {{"check", "service-hits"}, {"node", "secret"}, {"at_least", 1}}}});
  steps.push_back({{"op", "start"}, {"agent", "agent"}});
  steps.push_back(run_step(1));
  steps.push_back(visit_step());
  steps.push_back(run_step(1));
  steps.push_back(expect({{"label", "agent adopted the injected service target"}, {"check", "agent-config"},
                          {"agent", "agent"}, {"field", "mappings[0].servicehost"}, {"equals", "10.0.0.7"}}));
  steps.push_back(expect({{"label", "visitor traffic reached the secret service"}, {"check", "service-hits"},
                          {"node", "secret"}, {"at_least", 1}}));
  steps.push_back(expect({{"label", "honest service got nothing"}, {"check", "service-hits"}, {"node", "web"},
                          {"equals", 0}}));
  steps.push_back(expect({{"label", "visitor saw the secret page"}, {"check", "visit-body"}, {"visitor", "visitor"},
                          {"equals", "SECRET"}}));
  steps.push_back(expect({{"label", "control-update link ends at the attacker"}, {"check", "link"}, {"a", "agent"},
                          {"b", "attacker"}, {"open", true}, {"dialed", "evil.attacker.test:6061"}}));
  steps.push_back(expect({{"label", "no update link to the real control server"}, {"check", "link"},
                          {"a", "agent"}, {"b", "control"}, {"dialed", "demo.oray.net:6061"}, {"equals", false}}));
  steps.push_back(expect({{"label", "attack succeeded"}, {"check", "attack"}, {"attack", "inject"},
                          {"succeeded", true}}));
  return {{"name", "inject-config"}, {"seed", 1}, {"steps", steps}};
}

Json builtin_restart_trigger() {
  Json steps = topology(false);
  steps.push_back({{"op", "attack"},
                   {"id", "garbage"},
                   {"kind", "restart-trigger"},
                   {"between", {"agent", "pfs"}},
                   {"victim", "agent"},
                   {"count", 1},
                   {"after", 2.0},
                   {"effect", {{"check", "restart-count"}, {"agent", "agent"}, {"equals", 1}}}});
  // The first configuration is the honest one; only the pull after the
  // restart is poisoned.
  steps.push_back({{"op", "attack"},
                   {"id", "inject"},
                   {"kind", "inject-config"},
                   {"between", {"agent", "control"}},
                   {"skip", 1},
                   {"set", {{"mappings[0].servicehost", "10.0.0.7"}, {"mappings[0].serviceport", 8080}}},
                   {"effect", {{"check", "service-hits"}, {"node", "secret"}, {"at_least", 1}}}});
  steps.push_back({{"op", "start"}, {"agent", "agent"}});
  steps.push_back(run_step(1));
  steps.push_back(visit_step());
  steps.push_back(run_step(1));
  steps.push_back(expect({{"label", "before the injection the honest service answers"}, {"check", "visit-body"},
                          {"visitor", "visitor"}, {"visit", 0}, {"equals", "OK"}}));
  steps.push_back(visit_step());
  steps.push_back(run_step(3));
  steps.push_back(expect({{"label", "exactly one restart"}, {"check", "restart-count"}, {"agent", "agent"},
                          {"equals", 1}}));
  steps.push_back(expect({{"label", "exactly one fresh pull"}, {"check", "config-pulls"}, {"agent", "agent"},
                          {"equals", 2}}));
  steps.push_back(expect({{"label", "post-restart config is attacker-controlled"}, {"check", "agent-config"},
                          {"agent", "agent"}, {"field", "mappings[0].servicehost"}, {"equals", "10.0.0.7"}}));
  steps.push_back(visit_step());
  steps.push_back(run_step(1));
  steps.push_back(expect({{"label", "visitor now reaches the secret service"}, {"check", "visit-body"},
                          {"visitor", "visitor"}, {"equals", "SECRET"}}));
  steps.push_back(expect({{"label", "restart trigger succeeded"}, {"check", "attack"}, {"attack", "garbage"},
                          {"succeeded", true}}));
  steps.push_back(expect({{"label", "re-poisoning succeeded"}, {"check", "attack"}, {"attack", "inject"},
                          {"succeeded", true}}));
  return {{"name", "restart-trigger"}, {"seed", 1}, {"steps", steps}};
}

Json builtin_mitigation_demo() {
  Json steps = topology(true);
  steps.push_back({{"op", "attack"},
                   {"id", "inject"},
                   {"kind", "inject-config"},
                   {"between", {"agent", "control"}},
                   {"set", {{"mappings[0].servicehost", "10.0.0.7"}, {"mappings[0].serviceport", 8080}}},
                   {"effect", {{"check", "service-hits"}, {"node", "secret"}, {"at_least", 1}}}});
  steps.push_back({{"op", "start"}, {"agent", "agent"}});
  steps.push_back(run_step(1));
  steps.push_back(visit_step());
  steps.push_back(run_step(1));
  steps.push_back(expect({{"label", "owner saw the injected target and declined"}, {"check", "refused"},
                          {"server", "pfs"}, {"domain", "demo.xicp.fun"}, {"step", "decision"}}));
  steps.push_back(expect({{"label", "no routable registration"}, {"check", "registered"}, {"server", "pfs"},
                          {"domain", "demo.xicp.fun"}, {"equals", false}}));
  steps.push_back(expect({{"label", "visitor gets the provider's not-found page"}, {"check", "visit-status"},
                          {"visitor", "visitor"}, {"equals", 404}}));
  steps.push_back(expect({{"label", "secret service untouched"}, {"check", "service-hits"}, {"node", "secret"},
                          {"equals", 0}}));
  steps.push_back(expect({{"label", "attack failed"}, {"check", "attack"}, {"attack", "inject"},
                          {"succeeded", false}}));
  return {{"name", "mitigation-demo"}, {"seed", 1}, {"steps", steps}};
}

}  // namespace

config::ForwardingConfig demo_config() {
  config::ForwardingConfig cfg;
  cfg.phsl = "demo.oray.net:6061";
  config::Mapping m;
  m.domain = "demo.xicp.fun";
  m.punycode = "demo.xicp.fun";
  m.servicehost = "127.0.0.1";
  m.serviceport = 8001;
  m.server.serverhost = "phfw-overseasvip.oray.net";
  m.server.serverport = 6061;
  m.server.feature = "tcp,udp";
  m.server.serverudpport = 6061;
  cfg.mappings.push_back(m);
  return cfg;
}

ScenarioSpec parse_spec(const Json& j) {
  if (!j.is_object()) throw ScenarioError(ScenarioErrc::Malformed, "scenario must be a JSON object");
  ScenarioSpec s;
  try {
    s.name = j.value("name", std::string("unnamed"));
    s.seed = j.value("seed", std::uint64_t{0});
  } catch (const Json::exception& e) {
    throw ScenarioError(ScenarioErrc::Malformed, std::string("bad name or seed: ") + e.what());
  }
  if (!j.contains("steps") || !j["steps"].is_array()) {
    throw ScenarioError(ScenarioErrc::Malformed, "scenario needs a \"steps\" array");
  }
  s.steps = j["steps"];
  return s;
}

std::vector<std::string> validate_spec(const ScenarioSpec& spec) { return Validator().run(spec); }

ScenarioResult run_scenario(const ScenarioSpec& spec) {
  if (const auto problems = validate_spec(spec); !problems.empty()) {
    ScenarioResult r;
    r.exit_code = 2;
    r.failures = problems;
    for (const std::string& p : problems) r.transcript.push_back("invalid spec: " + p);
    return r;
  }
  try {
    return Runner(spec).run();
  } catch (const Json::exception& e) {
    // Field of the wrong JSON type somewhere the validator does not look.
    ScenarioResult r;
    r.exit_code = 2;
    r.failures = {std::string("invalid spec: ") + e.what()};
    r.transcript = r.failures;
    return r;
  }
}

std::vector<std::string> builtin_names() { return {"mitm-data", "inject-config", "restart-trigger", "mitigation-demo"}; }

std::optional<Json> builtin_spec(std::string_view name) {
  if (name == "mitm-data") return builtin_mitm_data();
  if (name == "inject-config") return builtin_inject_config();
  if (name == "restart-trigger") return builtin_restart_trigger();
  if (name == "mitigation-demo") return builtin_mitigation_demo();
  return std::nullopt;
}

ScenarioSpec load_spec(const std::string& name_or_path) {
  if (const auto b = builtin_spec(name_or_path)) return parse_spec(*b);
  std::ifstream in(name_or_path);
  if (!in) {
    throw ScenarioError(ScenarioErrc::UnknownScenario,
                        "no built-in scenario or file named \"" + name_or_path + "\"");
  }
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ScenarioError(ScenarioErrc::Malformed, name_or_path + ": " + e.what());
  }
  return parse_spec(j);
}

}  // namespace pfs::scenario
