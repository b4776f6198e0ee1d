#include <gtest/gtest.h>

#include <regex>

#include "pfs/measure.hpp"
#include "support.hpp"
#include "world.hpp"

using namespace pfs;
using namespace pfs::server;
using namespace testing_support;

namespace {

std::string transcript(int status, const std::string& reason, const std::vector<std::string>& headers,
                       const std::string& body) {
  std::string out = "HTTP/1.1 " + std::to_string(status) + " " + reason + "\r\n";
  for (const auto& h : headers) out += h + "\r\n";
  out += "Content-Length: " + std::to_string(body.size()) + "\r\n\r\n" + body;
  return out;
}

World oray_world_up(std::uint64_t seed = 7) {
  World w = make_world({.seed = seed});
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(1));
  return w;
}

World ngrok_world_up(int mappings) {
  config::ForwardingConfig cfg = oray_sample();
  while (static_cast<int>(cfg.mappings.size()) < mappings) cfg.mappings.push_back(cfg.mappings.front());
  World w = make_world({.style = ProviderStyle::NgrokStyle, .config = cfg});
  w.agent->start(w.n());
  w.n().run_until(sim::seconds(1));
  return w;
}

}  // namespace

TEST(AccessControl, IpBlockNgrokIsBitExact403) {
  AccessPolicy p;
  p.ip_block = {"198.51.100.7"};
  const AccessDecision d = enforce_access_control(p, "198.51.100.7", std::nullopt, std::nullopt,
                                                  ProviderStyle::NgrokStyle);
  EXPECT_EQ(d.kind, AccessDecision::Kind::Deny);
  EXPECT_EQ(d.status, 403);
  EXPECT_EQ(d.error_code, "ERR_NGROK_3205");
  EXPECT_EQ(http::serialize(d.response),
            transcript(403, "Forbidden",
                       {"Content-Type: text/plain", "X-PFS-Error-Page: provider", "X-PFS-Error-Code: ERR_NGROK_3205"},
                       "ERR_NGROK_3205 The IP address 198.51.100.7 is not allowed.\n"));
}

TEST(AccessControl, IpBlockOrayDropsTheConnection) {
  AccessPolicy p;
  p.ip_allow = {"203.0.113.99"};
  const AccessDecision d = enforce_access_control(p, "198.51.100.7", std::nullopt, std::nullopt,
                                                  ProviderStyle::OrayStyle);
  EXPECT_EQ(d.kind, AccessDecision::Kind::DropConnection);
}

TEST(AccessControl, UserAgentFilterIsBitExact403) {
  AccessPolicy p;
  p.ua_filter = "^Mozilla/";
  const AccessDecision d = enforce_access_control(p, "198.51.100.7", std::string("curl/8.0"), std::nullopt,
                                                  ProviderStyle::NgrokStyle);
  EXPECT_EQ(d.status, 403);
  EXPECT_EQ(d.error_code, "ERR_NGROK_3211");
  EXPECT_EQ(http::serialize(d.response),
            transcript(403, "Forbidden",
                       {"Content-Type: text/plain", "X-PFS-Error-Page: provider", "X-PFS-Error-Code: ERR_NGROK_3211"},
                       "ERR_NGROK_3211 The User-Agent is not allowed.\n"));
  EXPECT_EQ(enforce_access_control(p, "x", std::string("Mozilla/5.0"), std::nullopt, ProviderStyle::NgrokStyle).kind,
            AccessDecision::Kind::Allow);
  EXPECT_EQ(enforce_access_control(p, "x", std::nullopt, std::nullopt, ProviderStyle::NgrokStyle).status, 403);
}

TEST(AccessControl, BasicAuthIs401WithoutCode) {
  AccessPolicy p;
  p.basic_auth = std::make_pair("alice", "pw");
  const AccessDecision d = enforce_access_control(p, "198.51.100.7", std::nullopt, std::nullopt,
                                                  ProviderStyle::NgrokStyle);
  EXPECT_EQ(d.status, 401);
  EXPECT_TRUE(d.error_code.empty());
  EXPECT_EQ(http::serialize(d.response),
            transcript(401, "Unauthorized",
                       {"Content-Type: text/plain", "WWW-Authenticate: Basic realm=\"pfs\"", "X-PFS-Error-Page: provider"},
                       "Authentication required.\n"));
  EXPECT_EQ(enforce_access_control(p, "x", std::nullopt, std::string("Basic YWxpY2U6cHc="), ProviderStyle::NgrokStyle)
                .kind,
            AccessDecision::Kind::Allow);
  EXPECT_EQ(enforce_access_control(p, "x", std::nullopt, std::string("Basic YWxpY2U6eHg="), ProviderStyle::NgrokStyle)
                .status,
            401);
}

TEST(AccessControl, RulesApplyIpThenUaThenAuth) {
  AccessPolicy p;
  p.ip_block = {"1.1.1.1"};
  p.ua_filter = "^ok$";
  p.basic_auth = std::make_pair("u", "p");
  EXPECT_EQ(enforce_access_control(p, "1.1.1.1", std::string("bad"), std::nullopt, ProviderStyle::NgrokStyle).error_code,
            "ERR_NGROK_3205");
  EXPECT_EQ(enforce_access_control(p, "2.2.2.2", std::string("bad"), std::nullopt, ProviderStyle::NgrokStyle).error_code,
            "ERR_NGROK_3211");
  EXPECT_EQ(enforce_access_control(p, "2.2.2.2", std::string("ok"), std::nullopt, ProviderStyle::NgrokStyle).status, 401);
}

TEST(AccessControl, AllowAndBlockListsAreExclusive) {
  PfsServer s("pfs", {});
  AccessPolicy p;
  p.ip_allow = {"1.1.1.1"};
  p.ip_block = {"2.2.2.2"};
  try {
    s.set_access_policy("a.pfs.test", p);
    FAIL();
  } catch (const ServerError& e) {
    EXPECT_EQ(e.code(), ServerErrc::InvalidPolicy);
  }
}

TEST(AssignDomain, FreeTierEmbedsTheOrigin) {
  PfsServer s("pfs", {.apex = "ngrok.io", .seed = 5});
  s.add_agent("a", "t");
  ASSERT_TRUE(s.authenticate("a", "t"));
  const std::string d = s.assign_domain("a", ProviderStyle::NgrokStyle, true, std::string("103.90.249.114"));
  EXPECT_TRUE(std::regex_match(d, std::regex("^[0-9a-f]{4}-103-90-249-114\\.ngrok\\.io$"))) << d;
  // Same shape as a known free-tier name once the random prefix is fixed.
  EXPECT_EQ("f4e5" + d.substr(4), "f4e5-103-90-249-114.ngrok.io");
  EXPECT_EQ(measure::decode_origin_ip(d, "ngrok.io"), "103.90.249.114");
}

TEST(AssignDomain, PaidTierHidesTheOrigin) {
  PfsServer s("pfs", {.apex = "ngrok.io", .seed = 5});
  s.add_agent("a", "t");
  s.authenticate("a", "t");
  const std::string d = s.assign_domain("a", ProviderStyle::NgrokStyle, false, std::string("103.90.249.114"));
  EXPECT_TRUE(std::regex_match(d, std::regex("^[0-9a-f]{8}\\.ngrok\\.io$"))) << d;
  EXPECT_FALSE(measure::decode_origin_ip(d, "ngrok.io"));
  EXPECT_TRUE(std::regex_match(s.assign_domain("a", ProviderStyle::OrayStyle, true, std::nullopt),
                               std::regex("^[0-9a-f]{8}\\.ngrok\\.io$")));
}

TEST(AssignDomain, ErrorsAndUniqueness) {
  PfsServer s("pfs", {.seed = 1});
  s.add_agent("a", "t");
  try {
    s.assign_domain("a", ProviderStyle::OrayStyle, false, std::nullopt);
    FAIL();
  } catch (const ServerError& e) {
    EXPECT_EQ(e.code(), ServerErrc::Unauthorized);
  }
  EXPECT_FALSE(s.authenticate("a", "wrong"));
  ASSERT_TRUE(s.authenticate("a", "t"));
  try {
    s.assign_domain("a", ProviderStyle::NgrokStyle, true, std::nullopt);
    FAIL();
  } catch (const ServerError& e) {
    EXPECT_EQ(e.code(), ServerErrc::MissingOrigin);
  }
  // 4 hex digits leave 65536 names per origin; 2000 draws must all differ.
  std::set<std::string> seen;
  for (int i = 0; i < 2000; ++i) {
    ASSERT_TRUE(seen.insert(s.assign_domain("a", ProviderStyle::NgrokStyle, true, std::string("10.0.0.1"))).second);
  }
}

TEST(RegisterPfw, ConfirmationPolicy) {
  const config::Mapping m = oray_sample().mappings[0];
  PfsServer open("pfs", {});
  EXPECT_EQ(open.register_pfw("a", m, std::nullopt, ProviderStyle::OrayStyle, std::nullopt, 0).pfw_domain,
            "xx.xicp.fun");

  PfsServer strict("pfs", {.require_confirmation = true});
  mitigation::SimulatedTee tee("tee", 11);
  tee.set_physical_presence(true);
  strict.trust_tee(tee.public_key());
  std::mt19937_64 rng(3);
  const auto good = tee.sign(mitigation::build_dialog("a", m, 100, rng), mitigation::Decision::Granted);
  EXPECT_NO_THROW(strict.register_pfw("a", m, good, ProviderStyle::OrayStyle, std::nullopt, 110));
  EXPECT_TRUE(strict.confirmation_for("XX.xicp.fun"));

  config::Mapping other = m;
  other.domain = "yy.xicp.fun";
  config::Mapping shown = other;
  shown.servicehost = "127.0.0.9";
  const auto mismatched = tee.sign(mitigation::build_dialog("a", shown, 100, rng), mitigation::Decision::Granted);
  try {
    strict.register_pfw("a", other, mismatched, ProviderStyle::OrayStyle, std::nullopt, 110);
    FAIL();
  } catch (const ServerError& e) {
    EXPECT_EQ(e.code(), ServerErrc::Unauthorized);
  }
  ASSERT_EQ(strict.refusals().size(), 1u);
  EXPECT_EQ(strict.refusals()[0].step, mitigation::VerifyStep::Binding);
  EXPECT_THROW(strict.register_pfw("a", other, std::nullopt, ProviderStyle::OrayStyle, std::nullopt, 110),
               ServerError);
  EXPECT_FALSE(strict.lookup("yy.xicp.fun"));
  for (const PfwRegistration& r : strict.registrations()) EXPECT_TRUE(r.confirmation);
}

TEST(RegisterPfw, DomainBelongsToOneAgent) {
  PfsServer s("pfs", {});
  const config::Mapping m = oray_sample().mappings[0];
  s.register_pfw("a", m, std::nullopt, ProviderStyle::OrayStyle, std::nullopt, 0);
  try {
    s.register_pfw("b", m, std::nullopt, ProviderStyle::OrayStyle, std::nullopt, 0);
    FAIL();
  } catch (const ServerError& e) {
    EXPECT_EQ(e.code(), ServerErrc::Duplicate);
  }
}

TEST(PublicRequests, RelaysWithForwardedHeadersReplaced) {
  World w = oray_world_up();
  http::Request req = get("/page");
  req.headers = {{"X-Forwarded-For", "1.2.3.4"}, {"X-Forwarded-Proto", "gopher"}, {"Accept", "*/*"}};
  const auto resp = visit_and_wait(w, "xx.xicp.fun", req);
  ASSERT_TRUE(resp);
  EXPECT_EQ(resp->status, 200);
  EXPECT_EQ(resp->body, "OK");
  ASSERT_EQ(w.web->received().size(), 1u);
  const http::Request& seen = w.web->received()[0];
  EXPECT_EQ(seen.target, "/page");
  EXPECT_EQ(http::header(seen.headers, "X-Forwarded-For"), "198.51.100.7");
  EXPECT_EQ(http::header(seen.headers, "X-Forwarded-Proto"), "http");
  EXPECT_EQ(http::header(seen.headers, "Accept"), "*/*");
  EXPECT_EQ(std::count_if(seen.headers.begin(), seen.headers.end(),
                          [](const auto& h) { return h.first == "X-Forwarded-For"; }),
            1);

  visit_and_wait(w, "xx.xicp.fun", get(), true);
  ASSERT_EQ(w.web->received().size(), 2u);
  EXPECT_EQ(http::header(w.web->received()[1].headers, "X-Forwarded-Proto"), "https");
}

TEST(PublicRequests, UnknownDomainIs404ProviderPage) {
  World w = oray_world_up();
  const auto resp = visit_and_wait(w, "nobody.xicp.fun");
  ASSERT_TRUE(resp);
  EXPECT_EQ(resp->status, 404);
  EXPECT_EQ(resp->body, "Tunnel nobody.xicp.fun not found.\n");
  EXPECT_EQ(http::header(resp->headers, "X-PFS-Error-Page"), "provider");
  EXPECT_FALSE(http::header(resp->headers, "X-PFS-Error-Code"));
}

TEST(PublicRequests, OfflineTunnelIs502) {
  World w = make_world({});
  w.server->register_pfw("agent-1", oray_sample().mappings[0], std::nullopt, ProviderStyle::OrayStyle, std::nullopt, 0);
  const auto resp = visit_and_wait(w, "xx.xicp.fun");
  ASSERT_TRUE(resp);
  EXPECT_EQ(resp->status, 502);
  EXPECT_EQ(resp->body, "Tunnel xx.xicp.fun is offline.\n");
  EXPECT_EQ(http::header(resp->headers, "X-PFS-Error-Page"), "provider");
}

TEST(PublicRequests, DenialTranscriptsEndToEnd) {
  World ngrok = ngrok_world_up(1);
  const std::string domain = *ngrok.agent->live_domains().begin();
  AccessPolicy p;
  p.ip_block = {"198.51.100.7"};
  ngrok.server->set_access_policy(domain, p);
  const std::size_t i = ngrok.visitor->visit(ngrok.n(), domain, get());
  ngrok.n().run_until(ngrok.n().now() + sim::seconds(1));
  EXPECT_EQ(*ngrok.visitor->visits()[i].response,
            transcript(403, "Forbidden",
                       {"Content-Type: text/plain", "X-PFS-Error-Page: provider", "X-PFS-Error-Code: ERR_NGROK_3205"},
                       "ERR_NGROK_3205 The IP address 198.51.100.7 is not allowed.\n"));

  World oray = oray_world_up();
  oray.server->set_access_policy("xx.xicp.fun", p);
  const std::size_t j = oray.visitor->visit(oray.n(), "xx.xicp.fun", get());
  oray.n().run_until(oray.n().now() + sim::seconds(1));
  EXPECT_TRUE(oray.visitor->visits()[j].dropped);
  EXPECT_FALSE(oray.visitor->visits()[j].response);
  EXPECT_TRUE(oray.web->received().empty());
}

TEST(Multiplexing, NgrokAgentSharesOneTunnel) {
  World w = ngrok_world_up(3);
  const auto domains = w.agent->live_domains();
  ASSERT_EQ(domains.size(), 3u);
  EXPECT_EQ(w.server->tunnels_of("agent-1").size(), 1u);
  std::size_t tunnel_opens = 0;
  for (const auto& e : w.n().trace()) {
    if (e.kind == "open" && e.sender == "agent" && e.receiver == "pfs") ++tunnel_opens;
  }
  EXPECT_EQ(tunnel_opens, 1u);
  for (const std::string& d : domains) {
    EXPECT_TRUE(std::regex_match(d, std::regex("^[0-9a-f]{4}-192-0-2-44\\.xicp\\.fun$"))) << d;
    const auto resp = visit_and_wait(w, d);
    ASSERT_TRUE(resp);
    EXPECT_EQ(resp->body, "OK");
  }
}

TEST(ServerProperty, ForwardedForAlwaysMatchesThePeer) {
  World w = oray_world_up();
  std::mt19937_64 rng(17);
  std::vector<std::string> ips;
  for (int i = 0; i < 60; ++i) {
    const std::string ip = "198.51." + std::to_string(random_int(rng, 0, 255)) + "." + std::to_string(random_int(rng, 1, 254));
    const std::string id = "v" + std::to_string(i);
    w.n().add_node(id, {ip});
    auto v = std::make_shared<services::Visitor>(id);
    w.n().set_behavior(id, v);
    http::Request r = get();
    if (random_int(rng, 0, 1)) r.headers.emplace_back("X-Forwarded-For", "6.6.6." + std::to_string(i));
    v->visit(w.n(), "xx.xicp.fun", r, random_int(rng, 0, 1) == 1);
    ips.push_back(ip);
  }
  w.n().run_until(w.n().now() + sim::seconds(2));
  ASSERT_EQ(w.web->received().size(), ips.size());
  // Requests can reach the service out of order only through latency, which is zero here.
  for (std::size_t i = 0; i < ips.size(); ++i) {
    EXPECT_EQ(http::header(w.web->received()[i].headers, "X-Forwarded-For"), ips[i]);
  }
}

TEST(ServerProperty, EveryRequestGetsExactlyOneOutcome) {
  std::mt19937_64 rng(23);
  for (int round = 0; round < 40; ++round) {
    World w = oray_world_up(static_cast<std::uint64_t>(round + 1));
    AccessPolicy p;
    const int kind = random_int(rng, 0, 3);
    if (kind == 1) p.ip_block = {"198.51.100.7"};
    if (kind == 2) p.ua_filter = "x";
    if (kind == 3) p.basic_auth = std::make_pair("u", "p");
    w.server->set_access_policy("xx.xicp.fun", p);
    const bool known = random_int(rng, 0, 3) != 0;
    const std::size_t i = w.visitor->visit(w.n(), known ? "xx.xicp.fun" : "zz.xicp.fun", get());
    w.n().run_until(w.n().now() + sim::seconds(1));
    const services::Visit& v = w.visitor->visits()[i];
    ASSERT_NE(v.response.has_value(), v.dropped);
    if (v.dropped) {
      EXPECT_TRUE(known && kind == 1);
      continue;
    }
    const int status = w.visitor->response(i)->status;
    const int expected = !known ? 404 : kind == 0 ? 200 : kind == 2 ? 403 : kind == 3 ? 401 : -1;
    EXPECT_EQ(status, expected);
  }
}
