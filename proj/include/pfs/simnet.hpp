#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pfs/bytes.hpp"
#include "pfs/error.hpp"

// Deterministic in-process network. Nodes exchange byte messages over
// links; every delivery passes through the link's interceptors, constrained
// by the link's channel security. Time is simulated and advances only when
// events are processed.
namespace pfs::sim {

// Simulated time in microseconds.
using SimTime = std::int64_t;

constexpr SimTime seconds(double s) { return static_cast<SimTime>(s * 1'000'000.0); }
constexpr double to_seconds(SimTime t) { return static_cast<double>(t) / 1'000'000.0; }

using LinkId = std::uint32_t;

enum class ChannelSecurity {
  Plain,        // on-path hops read and rewrite freely
  TlsNoVerify,  // peer skips certificate checks: an impersonating hop reads and rewrites
  TlsVerified,  // on-path hops see ciphertext only; they may drop, never read or rewrite
};

const char* to_string(ChannelSecurity s);
std::optional<ChannelSecurity> parse_security(std::string_view s);

enum class SimErrc { Duplicate, NoSuchNode, NoSuchLink, Unreachable, SecurityViolation, Livelock };

using SimError = BasicError<SimErrc>;

struct InterceptContext {
  LinkId link = 0;
  std::string from;
  std::string to;
  SimTime now = 0;
  ChannelSecurity security = ChannelSecurity::Plain;
  // False on TlsVerified links: the bytes handed to the hook are an opaque blob.
  bool plaintext_visible = true;
  std::string label;
};

struct InterceptDecision {
  enum class Kind { Pass, Rewrite, Drop };
  Kind kind = Kind::Pass;
  Bytes bytes;

  static InterceptDecision pass() { return {}; }
  static InterceptDecision rewrite(Bytes b) { return {Kind::Rewrite, std::move(b)}; }
  static InterceptDecision drop() { return {Kind::Drop, {}}; }
};

using Interceptor = std::function<InterceptDecision(const InterceptContext&, ByteView)>;

struct NamedInterceptor {
  std::string name;
  Interceptor hook;
};

struct SimMessage {
  LinkId link = 0;
  std::string from;
  std::string to;
  Bytes bytes;
  std::string label;
  SimTime sent_at = 0;
};

struct SimNode {
  std::string node_id;
  std::vector<std::string> addresses;
  // Messages delivered to a node without a behavior.
  std::deque<SimMessage> inbox;
};

struct SimLink {
  LinkId id = 0;
  std::string endpoint_a;  // initiator
  std::string endpoint_b;  // acceptor
  ChannelSecurity security = ChannelSecurity::Plain;
  bool datagram = false;   // UDP: drops are silent
  bool open = true;
  std::string dialed;      // "host:port" the initiator asked for, if any
  SimTime latency = 0;
  std::vector<NamedInterceptor> interceptors;
};

struct TraceEvent {
  SimTime time = 0;
  // send | deliver | rewrite | drop | violation | undeliverable | open | close | note
  std::string kind;
  std::string sender;
  std::string receiver;
  LinkId link = 0;
  std::string label;
  std::string summary;
  std::size_t length = 0;
};

using EventTrace = std::vector<TraceEvent>;

std::string to_jsonl(const EventTrace& trace);

class SimNet;

// Protocol logic attached to a node.
class NodeBehavior {
 public:
  virtual ~NodeBehavior() = default;
  virtual void on_message(SimNet& net, const SimMessage& msg) = 0;
  virtual void on_link_closed(SimNet& /*net*/, LinkId /*link*/) {}
};

struct ConnectOptions {
  bool datagram = false;
  SimTime latency = 0;
  std::string dialed;
};

enum class ViolationPolicy { Throw, Record };

struct SimOptions {
  std::uint64_t seed = 0;
  std::size_t event_budget = 1'000'000;
  ViolationPolicy violation_policy = ViolationPolicy::Throw;
  // Probability that a datagram link loses a message.
  double datagram_loss = 0.0;
};

class SimNet {
 public:
  explicit SimNet(SimOptions options = {});

  SimNet(const SimNet&) = delete;
  SimNet& operator=(const SimNet&) = delete;

  SimNode& add_node(const std::string& node_id, std::vector<std::string> addresses = {});
  SimNode& node(const std::string& node_id);
  const SimNode& node(const std::string& node_id) const;
  bool has_node(const std::string& node_id) const;
  void set_behavior(const std::string& node_id, std::shared_ptr<NodeBehavior> behavior);
  std::shared_ptr<NodeBehavior> behavior(const std::string& node_id) const;

  // Name resolution. `endpoint` is "host:port"; a host of the form "*.suffix"
  // matches any subdomain of suffix.
  void bind(const std::string& endpoint, const std::string& node_id);
  std::optional<std::string> resolve(std::string_view host, int port) const;

  LinkId connect(const std::string& a, const std::string& b, ChannelSecurity security,
                 ConnectOptions options = {});
  // Resolves "host:port" and connects. Throws SimError(Unreachable).
  LinkId dial(const std::string& from, const std::string& endpoint, ChannelSecurity security,
              bool datagram = false);

  void close(LinkId link, const std::string& by);
  const SimLink& link(LinkId id) const;
  const std::map<LinkId, SimLink>& links() const { return links_; }
  std::string peer(LinkId link, const std::string& self) const;
  // First simulated address of the peer, or its node id when it has none.
  std::string peer_address(LinkId link, const std::string& self) const;

  void install_interceptor(LinkId link, std::string name, Interceptor hook);
  // Attaches the hook to every current and future link between a and b.
  void install_path_interceptor(const std::string& a, const std::string& b, std::string name,
                                Interceptor hook);

  void send(LinkId link, const std::string& from, Bytes bytes, std::string label = {});
  void schedule(SimTime delay, std::function<void()> fn);
  void note(const std::string& node_id, std::string label, std::string summary = {});

  // Processes events until none remain. Throws SimError(Livelock) once the
  // event budget is spent.
  const EventTrace& run_until_idle();
  // Processes events with time <= deadline, then sets now to deadline.
  const EventTrace& run_until(SimTime deadline);

  SimTime now() const { return now_; }
  const EventTrace& trace() const { return trace_; }
  std::mt19937_64& rng() { return rng_; }
  std::uint64_t seed() const { return options_.seed; }
  std::size_t violations() const { return violations_; }

 private:
  struct Event {
    SimTime time;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& x, const Event& y) const {
      return x.time != y.time ? x.time > y.time : x.seq > y.seq;
    }
  };

  void push(SimTime at, std::function<void()> fn);
  bool step();
  void deliver(SimMessage msg);
  Bytes opaque(LinkId link, ByteView bytes);
  void record(TraceEvent ev);
  SimLink& link_mut(LinkId id);

  SimOptions options_;
  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::size_t processed_ = 0;
  std::size_t violations_ = 0;
  LinkId next_link_ = 1;
  std::priority_queue<Event, std::vector<Event>, Later> pending_;
  std::map<std::string, SimNode> nodes_;
  std::map<std::string, std::shared_ptr<NodeBehavior>> behaviors_;
  std::map<std::string, std::string> bindings_;
  std::map<LinkId, SimLink> links_;
  struct PathHook {
    std::string a, b;
    NamedInterceptor hook;
  };
  std::vector<PathHook> path_hooks_;
  EventTrace trace_;
  std::mt19937_64 rng_;
};

}  // namespace pfs::sim
