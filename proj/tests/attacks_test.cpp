#include <gtest/gtest.h>

#include "pfs/attacks.hpp"
#include "pfs/frame.hpp"
#include "world.hpp"

using namespace pfs;
using namespace pfs::attacks;
using namespace testing_support;
using sim::ChannelSecurity;

namespace {

constexpr ChannelSecurity kLevels[] = {ChannelSecurity::Plain, ChannelSecurity::TlsNoVerify,
                                       ChannelSecurity::TlsVerified};

struct Cell {
  AttackReport report;
  World world;
};

Cell run_mitm(ChannelSecurity sec, std::string replacement = "PWNED") {
  WorldOptions o;
  o.agent.data_security = sec;
  World w = make_world(o);
  w.n().install_path_interceptor("agent", "pfs", "mitm", mitm_rewrite_data(to_bytes("OK"), to_bytes(replacement)));
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(1));
  const auto resp = visit_and_wait(w, "xx.xicp.fun");
  const bool effect = resp && resp->body == replacement;
  AttackReport r = make_report(AttackKind::DataPlaneMitm, "mitm", w.n().trace(), effect);
  return {r, std::move(w)};
}

Cell run_inject(ChannelSecurity sec, ConfigMutator mutator = redirect_service("10.0.0.7", 8080)) {
  WorldOptions o;
  o.agent.pull_security = sec;
  World w = make_world(o);
  w.n().install_path_interceptor("agent", "control", "inject", inject_malicious_config(std::move(mutator)));
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(1));
  visit_and_wait(w, "xx.xicp.fun");
  const bool effect = !w.secret->received().empty();
  AttackReport r = make_report(AttackKind::ConfigInjection, "inject", w.n().trace(), effect);
  return {r, std::move(w)};
}

Cell run_restart(ChannelSecurity sec) {
  WorldOptions o;
  o.agent.data_security = sec;
  World w = make_world(o);
  w.n().install_path_interceptor("agent", "pfs", "garbage", trigger_agent_restart({.victim = "agent"}));
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(5));
  const bool effect = w.agent->state().restart_count > 0;
  AttackReport r = make_report(AttackKind::RestartTrigger, "garbage", w.n().trace(), effect);
  return {r, std::move(w)};
}

}  // namespace

TEST(SecurityMatrix, EachAttackSucceedsExactlyBelowVerifiedTls) {
  for (ChannelSecurity sec : kLevels) {
    const bool expected = sec != ChannelSecurity::TlsVerified;
    const Cell mitm = run_mitm(sec);
    const Cell inject = run_inject(sec);
    const Cell restart = run_restart(sec);
    EXPECT_EQ(mitm.report.succeeded, expected) << sim::to_string(sec);
    EXPECT_EQ(inject.report.succeeded, expected) << sim::to_string(sec);
    EXPECT_EQ(restart.report.succeeded, expected) << sim::to_string(sec);
    for (const Cell* c : {&mitm, &inject, &restart}) {
      if (c->report.succeeded) EXPECT_FALSE(c->report.evidence.empty());
    }
  }
}

TEST(SecurityMatrix, VerifiedLinksDeliverOriginalBytes) {
  const Cell mitm = run_mitm(ChannelSecurity::TlsVerified);
  EXPECT_EQ(mitm.world.visitor->response(0)->body, "OK");
  const Cell restart = run_restart(ChannelSecurity::TlsVerified);
  EXPECT_EQ(restart.world.agent->state().restart_count, 0u);
  EXPECT_GE(restart.world.net->violations(), 1u);
  const Cell inject = run_inject(ChannelSecurity::TlsVerified);
  EXPECT_EQ(inject.world.agent->state().config->mappings[0].servicehost, "127.0.0.1");
  EXPECT_EQ(inject.world.web->received().size(), 1u);
}

TEST(DataPlaneMitm, IsInvisibleToTheVictims) {
  const Cell c = run_mitm(ChannelSecurity::Plain);
  EXPECT_TRUE(c.report.succeeded);
  EXPECT_FALSE(c.report.victim_observable);
  EXPECT_EQ(c.world.agent->state().restart_count, 0u);
  EXPECT_EQ(count_events(c.world.net->trace(), "note", "bad-mac"), 0u);
  EXPECT_EQ(count_events(c.world.net->trace(), "note", "server-invalid-data"), 0u);
  // The internal service answered "OK"; only the visitor saw "PWNED".
  EXPECT_EQ(c.world.visitor->response(0)->body, "PWNED");
}

TEST(DataPlaneMitm, LengthChangingRewriteIsAccepted) {
  const std::string longer(300, 'Z');
  const Cell c = run_mitm(ChannelSecurity::Plain, longer);
  ASSERT_TRUE(c.report.succeeded);
  const auto resp = c.world.visitor->response(0);
  EXPECT_EQ(resp->body, longer);
  EXPECT_EQ(http::header(resp->headers, "Content-Length"), "300");
  EXPECT_FALSE(c.report.victim_observable);
}

TEST(DataPlaneMitm, NonMatchingFramesPassUnchanged) {
  const auto hook = mitm_rewrite_data(to_bytes("absent"), to_bytes("x"));
  const Bytes f = frame::encode_frame(frame::make_frame(frame::FrameType::DataResponse, 3, to_bytes("HTTP/1.1 200 OK\r\n\r\n")));
  EXPECT_EQ(hook({}, f).kind, sim::InterceptDecision::Kind::Pass);
  const Bytes hb = frame::encode_frame(frame::make_frame(frame::FrameType::Heartbeat, 0, {}));
  EXPECT_EQ(hook({}, hb).kind, sim::InterceptDecision::Kind::Pass);
}

TEST(DataPlaneMitm, RewrittenFramesCarryValidMacs) {
  const auto hook = mitm_rewrite_data(to_bytes("OK"), to_bytes("PWNED!!"));
  const std::string payload = "HTTP/1.1 200 OK\r\nContent-Length: 2\r\n\r\nOK";
  Bytes two = frame::encode_frame(frame::make_frame(frame::FrameType::DataResponse, 1, to_bytes(payload)));
  const Bytes second = frame::encode_frame(frame::make_frame(frame::FrameType::DataResponse, 2, to_bytes(payload)));
  two.insert(two.end(), second.begin(), second.end());
  const auto d = hook({}, two);
  ASSERT_EQ(d.kind, sim::InterceptDecision::Kind::Rewrite);
  frame::FrameReader reader;
  reader.feed(d.bytes);
  for (std::uint32_t stream : {1u, 2u}) {
    const auto f = reader.next();
    ASSERT_TRUE(f);
    EXPECT_EQ(f->stream_id, stream);
    EXPECT_EQ(f->mac, frame::compute_mac(f->payload));
    EXPECT_EQ(http::parse_response(to_string(f->payload))->body, "PWNED!!");
  }
}

TEST(ConfigInjection, RedirectsVisitorsToTheSecretService) {
  const Cell c = run_inject(ChannelSecurity::TlsNoVerify);
  ASSERT_TRUE(c.report.succeeded);
  EXPECT_EQ(c.world.visitor->response(0)->body, "SECRET");
  EXPECT_TRUE(c.world.web->received().empty());
  bool reached_secret = false;
  for (const auto& e : c.world.net->trace()) {
    if (e.kind == "deliver" && e.receiver == "secret" && e.label == "internal-request") reached_secret = true;
  }
  EXPECT_TRUE(reached_secret);
}

TEST(ConfigInjection, PhslRewriteMovesTheControlLinkToTheAttacker) {
  WorldOptions o;
  World w = make_world(o);
  auto attacker = std::make_shared<services::ControlServer>("attacker");
  w.n().add_node("attacker", {"203.0.113.66"});
  w.n().bind("evil.attacker.test:6061", "attacker");
  w.n().set_behavior("attacker", attacker);
  w.n().install_path_interceptor("agent", "control", "inject",
                                 inject_malicious_config(redirect_phsl("evil.attacker.test:6061")));
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(1));
  const sim::LinkId control = w.agent->links_with_role("control").front();
  EXPECT_EQ(w.n().link(control).endpoint_b, "attacker");
  EXPECT_EQ(attacker->subscribers(), std::set<std::string>{"agent-1"});
  EXPECT_TRUE(w.control->subscribers().empty());

  // The attacker now owns the update channel.
  config::ForwardingConfig evil = oray_sample();
  evil.phsl = "evil.attacker.test:6061";
  evil.mappings[0].servicehost = "10.0.0.7";
  evil.mappings[0].serviceport = 8080;
  EXPECT_EQ(attacker->push_update(w.n(), config::serialize_config(evil)), 1u);
  w.n().run_until(sim::seconds(2));
  EXPECT_EQ(visit_and_wait(w, "xx.xicp.fun")->body, "SECRET");
}

TEST(ConfigInjection, ServerRedirectMovesTheDataTunnel) {
  WorldOptions o;
  World w = make_world(o);
  w.n().add_node("rogue", {"203.0.113.77"});
  w.n().bind("rogue.attacker.test:7000", "rogue");
  w.n().install_path_interceptor("agent", "control", "inject",
                                 inject_malicious_config(redirect_server("rogue.attacker.test", 7000)));
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(1));
  bool dialed_rogue = false;
  for (const auto& e : w.n().trace()) {
    if (e.kind == "open" && e.sender == "agent" && e.receiver == "rogue" && e.label == "rogue.attacker.test:7000") {
      dialed_rogue = true;
    }
  }
  EXPECT_TRUE(dialed_rogue);
  EXPECT_FALSE(w.n().node("rogue").inbox.empty());
}

TEST(ConfigInjection, InvalidMutationEndsInBadConfig) {
  const Cell c = run_inject(ChannelSecurity::TlsNoVerify, set_fields({{"mappings[0].serviceport", 0}}));
  EXPECT_FALSE(c.report.succeeded);
  EXPECT_TRUE(c.report.victim_observable);
  EXPECT_EQ(c.world.agent->state().last_error, agent::AgentErrc::BadConfig);
}

TEST(ConfigInjection, UpdateChannelIsRewrittenToo) {
  WorldOptions o;
  World w = make_world(o);
  // Skip the initial pull; poison the first pushed update instead.
  w.n().install_path_interceptor("agent", "control", "inject",
                                 inject_malicious_config(redirect_service("10.0.0.7", 8080), 1));
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(1));
  EXPECT_EQ(visit_and_wait(w, "xx.xicp.fun")->body, "OK");
  w.control->push_update(w.n(), config::serialize_config(oray_sample()));
  w.n().run_until(w.n().now() + sim::seconds(1));
  EXPECT_EQ(visit_and_wait(w, "xx.xicp.fun")->body, "SECRET");
}

TEST(RestartTrigger, OneInjectionOneRestartOnePull) {
  const Cell c = run_restart(ChannelSecurity::Plain);
  EXPECT_TRUE(c.report.succeeded);
  EXPECT_TRUE(c.report.victim_observable);
  EXPECT_EQ(c.world.agent->state().restart_count, 1u);
  EXPECT_EQ(c.world.agent->config_pulls(), 2u);
  EXPECT_EQ(c.world.control->pulls_served(), 2u);
}

TEST(RestartTrigger, ComposedWithInjectionRepoisonsAfterRestart) {
  WorldOptions o;
  World w = make_world(o);
  w.n().install_path_interceptor("agent", "pfs", "garbage",
                                 trigger_agent_restart({.victim = "agent", .after = sim::seconds(2)}));
  w.n().install_path_interceptor("agent", "control", "inject",
                                 inject_malicious_config(redirect_service("10.0.0.7", 8080), 1));
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(1));
  EXPECT_EQ(visit_and_wait(w, "xx.xicp.fun")->body, "OK");
  // The next frame down the data link after t=2 s carries the garbage.
  w.n().run_until(sim::seconds(3));
  visit_and_wait(w, "xx.xicp.fun");
  EXPECT_EQ(w.agent->state().restart_count, 1u);
  EXPECT_EQ(w.agent->state().config->mappings[0].servicehost, "10.0.0.7");
  EXPECT_EQ(visit_and_wait(w, "xx.xicp.fun")->body, "SECRET");
}

TEST(RestartTrigger, NoInjectionNoRestart) {
  World w = make_world({});
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(5));
  EXPECT_EQ(w.agent->state().restart_count, 0u);
  EXPECT_FALSE(victim_observable(w.n().trace()));
}

TEST(Mitigation, InjectionNeverYieldsARoutableRegistration) {
  for (bool with_tee : {false, true}) {
    WorldOptions o;
    o.require_confirmation = true;
    if (with_tee) {
      o.agent.tee = std::make_shared<mitigation::SimulatedTee>("tee", 5);
      o.agent.tee->set_physical_presence(true);
      // The owner only approves the mapping they actually set up.
      o.agent.consent = [](const mitigation::ConfirmationDialog& d) {
        return d.servicehost == "127.0.0.1" && d.serviceport == 8001 ? mitigation::Decision::Granted
                                                                     : mitigation::Decision::Denied;
      };
    }
    World w = make_world(o);
    w.n().install_path_interceptor("agent", "control", "inject",
                                   inject_malicious_config(redirect_service("10.0.0.7", 8080)));
    w.agent->start(w.n());
    w.n().run_until(sim::seconds(1));
    EXPECT_FALSE(w.server->lookup("xx.xicp.fun"));
    ASSERT_EQ(w.server->refusals().size(), 1u);
    EXPECT_EQ(w.server->refusals()[0].step,
              with_tee ? mitigation::VerifyStep::Decision : mitigation::VerifyStep::Signature);
    const auto resp = visit_and_wait(w, "xx.xicp.fun");
    EXPECT_EQ(resp->status, 404);
    EXPECT_TRUE(w.secret->received().empty());
  }
}

TEST(Reports, NamesAndParsing) {
  for (AttackKind k : {AttackKind::DataPlaneMitm, AttackKind::ConfigInjection, AttackKind::RestartTrigger}) {
    EXPECT_EQ(parse_attack(to_string(k)), k);
  }
  EXPECT_FALSE(parse_attack("nope"));
  const AttackReport r = make_report(AttackKind::DataPlaneMitm, "x", {}, true);
  EXPECT_FALSE(r.succeeded);
}
