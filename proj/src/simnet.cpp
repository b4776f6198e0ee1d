#include "pfs/simnet.hpp"

#include <algorithm>

#include <json.hpp>

#include "pfs/config.hpp"

namespace pfs::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool host_matches(std::string_view pattern, std::string_view host) {
  if (pattern.starts_with("*.")) {
    const std::string_view suffix = pattern.substr(1);  // ".apex"
    return host.size() > suffix.size() && host.ends_with(suffix);
  }
  return pattern == host;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

const char* to_string(ChannelSecurity s) {
  switch (s) {
    case ChannelSecurity::Plain: return "plain";
    case ChannelSecurity::TlsNoVerify: return "tls-noverify";
    case ChannelSecurity::TlsVerified: return "tls-verified";
  }
  return "unknown";
}

std::optional<ChannelSecurity> parse_security(std::string_view s) {
  if (s == "plain") return ChannelSecurity::Plain;
  if (s == "tls-noverify") return ChannelSecurity::TlsNoVerify;
  if (s == "tls-verified") return ChannelSecurity::TlsVerified;
  return std::nullopt;
}

std::string to_jsonl(const EventTrace& trace) {
  std::string out;
  for (const TraceEvent& ev : trace) {
    nlohmann::ordered_json j;
    j["t"] = to_seconds(ev.time);
    j["kind"] = ev.kind;
    j["from"] = ev.sender;
    j["to"] = ev.receiver;
    j["link"] = ev.link;
    j["label"] = ev.label;
    j["len"] = ev.length;
    j["summary"] = ev.summary;
    out += j.dump();
    out += '\n';
  }
  return out;
}

SimNet::SimNet(SimOptions options) : options_(options), rng_(options.seed) {}

SimNode& SimNet::add_node(const std::string& node_id, std::vector<std::string> addresses) {
  if (nodes_.contains(node_id)) throw SimError(SimErrc::Duplicate, "duplicate node id \"" + node_id + "\"");
  SimNode& n = nodes_[node_id];
  n.node_id = node_id;
  n.addresses = std::move(addresses);
  return n;
}

SimNode& SimNet::node(const std::string& node_id) {
  const auto it = nodes_.find(node_id);
  if (it == nodes_.end()) throw SimError(SimErrc::NoSuchNode, "no node \"" + node_id + "\"");
  return it->second;
}

const SimNode& SimNet::node(const std::string& node_id) const {
  const auto it = nodes_.find(node_id);
  if (it == nodes_.end()) throw SimError(SimErrc::NoSuchNode, "no node \"" + node_id + "\"");
  return it->second;
}

bool SimNet::has_node(const std::string& node_id) const { return nodes_.contains(node_id); }

void SimNet::set_behavior(const std::string& node_id, std::shared_ptr<NodeBehavior> behavior) {
  node(node_id);
  behaviors_[node_id] = std::move(behavior);
}

std::shared_ptr<NodeBehavior> SimNet::behavior(const std::string& node_id) const {
  const auto it = behaviors_.find(node_id);
  return it == behaviors_.end() ? nullptr : it->second;
}

void SimNet::bind(const std::string& endpoint, const std::string& node_id) {
  node(node_id);
  bindings_[lower(endpoint)] = node_id;
}

std::optional<std::string> SimNet::resolve(std::string_view host_in, int port) const {
  const std::string host = lower(host_in);
  const std::string exact = host + ":" + std::to_string(port);
  if (const auto it = bindings_.find(exact); it != bindings_.end()) return it->second;
  // Wildcards: the longest matching suffix wins so resolution does not depend on map order.
  std::optional<std::string> best;
  std::size_t best_len = 0;
  for (const auto& [endpoint, id] : bindings_) {
    const config::HostPort hp = config::split_host_port(endpoint);
    if (hp.port == port && host_matches(hp.host, host) && hp.host.size() > best_len) {
      best = id;
      best_len = hp.host.size();
    }
  }
  if (best) return best;
  for (const auto& [id, n] : nodes_) {
    if (std::find(n.addresses.begin(), n.addresses.end(), host) != n.addresses.end()) return id;
  }
  return std::nullopt;
}

LinkId SimNet::connect(const std::string& a, const std::string& b, ChannelSecurity security,
                       ConnectOptions options) {
  node(a);
  node(b);
  SimLink l;
  l.id = next_link_++;
  l.endpoint_a = a;
  l.endpoint_b = b;
  l.security = security;
  l.datagram = options.datagram;
  l.latency = options.latency;
  l.dialed = options.dialed;
  for (const PathHook& ph : path_hooks_) {
    if ((ph.a == a && ph.b == b) || (ph.a == b && ph.b == a)) l.interceptors.push_back(ph.hook);
  }
  const LinkId id = l.id;
  links_.emplace(id, std::move(l));
  record({now_, "open", a, b, id, options.dialed,
          std::string(to_string(security)) + (options.datagram ? " udp" : " tcp"), 0});
  return id;
}

LinkId SimNet::dial(const std::string& from, const std::string& endpoint, ChannelSecurity security,
                    bool datagram) {
  const config::HostPort hp = config::split_host_port(endpoint);
  const auto target = resolve(hp.host, hp.port);
  if (!target) {
    record({now_, "note", from, "", 0, "unreachable", endpoint, 0});
    throw SimError(SimErrc::Unreachable, "cannot reach " + endpoint);
  }
  ConnectOptions opts;
  opts.datagram = datagram;
  opts.dialed = endpoint;
  return connect(from, *target, security, opts);
}

void SimNet::close(LinkId id, const std::string& by) {
  SimLink& l = link_mut(id);
  if (!l.open) return;
  // Takes effect after one latency so bytes already in flight still arrive.
  push(now_ + l.latency, [this, id, by] {
    SimLink& link = link_mut(id);
    if (!link.open) return;
    link.open = false;
    const std::string other = by == link.endpoint_a ? link.endpoint_b : link.endpoint_a;
    record({now_, "close", by, other, id, link.dialed, "", 0});
    if (auto b = behavior(other)) b->on_link_closed(*this, id);
  });
}

const SimLink& SimNet::link(LinkId id) const {
  const auto it = links_.find(id);
  if (it == links_.end()) throw SimError(SimErrc::NoSuchLink, "no link " + std::to_string(id));
  return it->second;
}

SimLink& SimNet::link_mut(LinkId id) {
  const auto it = links_.find(id);
  if (it == links_.end()) throw SimError(SimErrc::NoSuchLink, "no link " + std::to_string(id));
  return it->second;
}

std::string SimNet::peer(LinkId id, const std::string& self) const {
  const SimLink& l = link(id);
  return l.endpoint_a == self ? l.endpoint_b : l.endpoint_a;
}

std::string SimNet::peer_address(LinkId id, const std::string& self) const {
  const SimNode& n = node(peer(id, self));
  return n.addresses.empty() ? n.node_id : n.addresses.front();
}

void SimNet::install_interceptor(LinkId id, std::string name, Interceptor hook) {
  link_mut(id).interceptors.push_back({std::move(name), std::move(hook)});
}

void SimNet::install_path_interceptor(const std::string& a, const std::string& b, std::string name,
                                      Interceptor hook) {
  node(a);
  node(b);
  NamedInterceptor ni{std::move(name), std::move(hook)};
  for (auto& [id, l] : links_) {
    if ((l.endpoint_a == a && l.endpoint_b == b) || (l.endpoint_a == b && l.endpoint_b == a)) {
      l.interceptors.push_back(ni);
    }
  }
  path_hooks_.push_back({a, b, std::move(ni)});
}

void SimNet::send(LinkId id, const std::string& from, Bytes bytes, std::string label) {
  const SimLink& l = link(id);
  SimMessage msg;
  msg.link = id;
  msg.from = from;
  msg.to = l.endpoint_a == from ? l.endpoint_b : l.endpoint_a;
  msg.label = std::move(label);
  msg.sent_at = now_;
  record({now_, "send", msg.from, msg.to, id, msg.label, escape_bytes(bytes), bytes.size()});
  msg.bytes = std::move(bytes);
  push(now_ + l.latency, [this, m = std::move(msg)]() mutable { deliver(std::move(m)); });
}

void SimNet::schedule(SimTime delay, std::function<void()> fn) { push(now_ + delay, std::move(fn)); }

void SimNet::note(const std::string& node_id, std::string label, std::string summary) {
  record({now_, "note", node_id, "", 0, std::move(label), std::move(summary), 0});
}

void SimNet::push(SimTime at, std::function<void()> fn) {
  pending_.push(Event{std::max(at, now_), next_seq_++, std::move(fn)});
}

bool SimNet::step() {
  if (pending_.empty()) return false;
  if (processed_ >= options_.event_budget) {
    throw SimError(SimErrc::Livelock, "event budget of " + std::to_string(options_.event_budget) + " exhausted");
  }
  Event ev = pending_.top();
  pending_.pop();
  ++processed_;
  now_ = ev.time;
  ev.fn();
  return true;
}

const EventTrace& SimNet::run_until_idle() {
  while (step()) {
  }
  return trace_;
}

const EventTrace& SimNet::run_until(SimTime deadline) {
  while (!pending_.empty() && pending_.top().time <= deadline) step();
  now_ = std::max(now_, deadline);
  return trace_;
}

Bytes SimNet::opaque(LinkId id, ByteView bytes) {
  std::uint64_t state = options_.seed ^ (static_cast<std::uint64_t>(id) << 32) ^ static_cast<std::uint64_t>(now_);
  Bytes out(bytes.begin(), bytes.end());
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i % 8 == 0) word = splitmix64(state);
    out[i] ^= static_cast<std::uint8_t>(word >> (8 * (i % 8)));
  }
  return out;
}

void SimNet::deliver(SimMessage msg) {
  SimLink& l = link_mut(msg.link);
  if (!l.open) {
    record({now_, "undeliverable", msg.from, msg.to, msg.link, msg.label, "link closed", msg.bytes.size()});
    return;
  }

  bool violated = false;
  // Copy: a hook may install further hooks on this link.
  const std::vector<NamedInterceptor> hooks = l.interceptors;
  const ChannelSecurity security = l.security;
  for (const NamedInterceptor& ni : hooks) {
    InterceptContext ctx{msg.link, msg.from, msg.to, now_, security,
                         security != ChannelSecurity::TlsVerified, msg.label};
    InterceptDecision d = ctx.plaintext_visible ? ni.hook(ctx, msg.bytes)
                                                : ni.hook(ctx, opaque(msg.link, msg.bytes));
    switch (d.kind) {
      case InterceptDecision::Kind::Pass:
        break;
      case InterceptDecision::Kind::Drop:
        record({now_, "drop", msg.from, msg.to, msg.link, msg.label, ni.name, msg.bytes.size()});
        return;
      case InterceptDecision::Kind::Rewrite:
        if (security == ChannelSecurity::TlsVerified) {
          ++violations_;
          violated = true;
          record({now_, "violation", msg.from, msg.to, msg.link, msg.label,
                  ni.name + ": rewrite refused on tls-verified link", msg.bytes.size()});
        } else {
          record({now_, "rewrite", msg.from, msg.to, msg.link, msg.label, ni.name, d.bytes.size()});
          msg.bytes = std::move(d.bytes);
        }
        break;
    }
  }

  if (l.datagram && options_.datagram_loss > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng_) < options_.datagram_loss) {
      record({now_, "drop", msg.from, msg.to, msg.link, msg.label, "datagram loss", msg.bytes.size()});
      return;
    }
  }

  record({now_, "deliver", msg.from, msg.to, msg.link, msg.label, escape_bytes(msg.bytes), msg.bytes.size()});
  if (auto b = behavior(msg.to)) {
    b->on_message(*this, msg);
  } else {
    node(msg.to).inbox.push_back(std::move(msg));
  }
  if (violated && options_.violation_policy == ViolationPolicy::Throw) {
    throw SimError(SimErrc::SecurityViolation, "interceptor attempted to rewrite a tls-verified link");
  }
}

void SimNet::record(TraceEvent ev) { trace_.push_back(std::move(ev)); }

}  // namespace pfs::sim
