#include <gtest/gtest.h>

#include <random>

#include "pfs/config.hpp"
#include "support.hpp"

using namespace pfs::config;

namespace {

// A captured Oray-style config, with the enclosing braces restored and the
// "phfw-overseasvip.oray.net" value rejoined where it had been line-wrapped.
constexpr const char* kOraySample = R"({
"phsl": "XX.oray.net:6061",
"mappings": [
  {
    "domain": "XX.xicp.fun",
    "punycode": "XX.xicp.fun",
    "servicehost": "127.0.0.1",
    "serviceport": 8001,
    "server": {
      "serverhost": "phfw-overseasvip.oray.net",
      "serverport": 6061,
      "feature": "tcp,udp",
      "serverudpport": 6061
    }
  }
]
})";

ConfigErrc parse_error(const std::string& text, std::string* field = nullptr) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    if (field) *field = e.field();
    return e.code();
  }
  ADD_FAILURE() << "parse_config accepted: " << text;
  return ConfigErrc::Syntax;
}

ForwardingConfig random_config(std::mt19937_64& rng) {
  using testing_support::random_int;
  using testing_support::random_token;
  ForwardingConfig c;
  c.phsl = random_token(rng, 1, 12) + ".oray.net:" + std::to_string(random_int(rng, 1, 65535));
  const int n = random_int(rng, 0, 4);
  for (int i = 0; i < n; ++i) {
    Mapping m;
    m.domain = random_token(rng, 1, 10) + ".xicp.fun";
    if (random_int(rng, 0, 1)) m.punycode = m.domain;
    m.servicehost = random_int(rng, 0, 1) ? "127.0.0.1" : random_token(rng, 1, 8) + ".lan";
    m.serviceport = random_int(rng, 0, 65535);
    m.server.serverhost = random_token(rng, 1, 16) + ".oray.net";
    m.server.serverport = random_int(rng, 0, 65535);
    const char* features[] = {"tcp", "udp", "tcp,udp", "udp,tcp", "xyz"};
    m.server.feature = features[random_int(rng, 0, 4)];
    m.server.serverudpport = random_int(rng, 0, 65535);
    if (random_int(rng, 0, 3) == 0) m.extra["weight"] = random_int(rng, 0, 100);
    if (random_int(rng, 0, 3) == 0) m.server.extra["region"] = random_token(rng, 2, 5);
    c.mappings.push_back(m);
  }
  if (random_int(rng, 0, 3) == 0) c.extra["version"] = random_token(rng, 1, 6);
  return c;
}

}  // namespace

TEST(ParseConfig, OraySampleFieldValues) {
  const ForwardingConfig c = parse_config(kOraySample);
  EXPECT_EQ(c.phsl, "XX.oray.net:6061");
  ASSERT_EQ(c.mappings.size(), 1u);
  const Mapping& m = c.mappings[0];
  EXPECT_EQ(m.domain, "XX.xicp.fun");
  EXPECT_EQ(m.punycode, "XX.xicp.fun");
  EXPECT_EQ(m.servicehost, "127.0.0.1");
  EXPECT_EQ(m.serviceport, 8001);
  EXPECT_EQ(m.server.serverhost, "phfw-overseasvip.oray.net");
  EXPECT_EQ(m.server.serverport, 6061);
  EXPECT_EQ(m.server.feature, "tcp,udp");
  EXPECT_EQ(m.server.serverudpport, 6061);
  EXPECT_TRUE(validate_config(c).empty());
}

TEST(ParseConfig, OraySampleRoundTrips) {
  const ForwardingConfig c = parse_config(kOraySample);
  const std::string text = serialize_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
  EXPECT_LT(text.find("\"phsl\""), text.find("\"mappings\""));
}

TEST(ParseConfig, EmptyObjectIsMissingPhsl) {
  std::string field;
  EXPECT_EQ(parse_error("{}", &field), ConfigErrc::MissingField);
  EXPECT_EQ(field, "phsl");
}

TEST(ParseConfig, ErrorKinds) {
  std::string field;
  EXPECT_EQ(parse_error("{\"phsl\": "), ConfigErrc::Syntax);
  EXPECT_EQ(parse_error("[1, 2]"), ConfigErrc::Syntax);
  EXPECT_EQ(parse_error(R"({"phsl": "a:1"})", &field), ConfigErrc::MissingField);
  EXPECT_EQ(field, "mappings");
  EXPECT_EQ(parse_error(R"({"phsl": "a:1", "mappings": [{"domain": "d", "servicehost": "h", "serviceport": 70000,
                          "server": {"serverhost": "s", "serverport": 1, "feature": "tcp"}}]})", &field),
            ConfigErrc::Range);
  EXPECT_EQ(field, "serviceport");
  EXPECT_EQ(parse_error(R"({"phsl": "a:1", "mappings": [{"domain": "d", "servicehost": "h", "serviceport": 1,
                          "server": {"serverhost": "s", "serverport": -1, "feature": "tcp"}}]})", &field),
            ConfigErrc::Range);
  EXPECT_EQ(field, "serverport");
  EXPECT_EQ(parse_error(R"({"phsl": "a:1", "mappings": [{"domain": "d", "servicehost": "h", "serviceport": 1}]})",
                        &field),
            ConfigErrc::MissingField);
  EXPECT_EQ(field, "server");
}

TEST(ParseConfig, UnknownKeysArePreserved) {
  const std::string text = R"({"phsl": "a.oray.net:6061", "token": "t0k",
    "mappings": [{"domain": "d.xicp.fun", "servicehost": "127.0.0.1", "serviceport": 80, "mode": "http",
                  "server": {"serverhost": "s.oray.net", "serverport": 6061, "feature": "tcp", "tls": false}}]})";
  const ForwardingConfig c = parse_config(text);
  EXPECT_EQ(c.extra["token"], "t0k");
  EXPECT_EQ(c.mappings[0].extra["mode"], "http");
  EXPECT_EQ(c.mappings[0].server.extra["tls"], false);
  const Json out = Json::parse(serialize_config(c));
  EXPECT_EQ(out["token"], "t0k");
  EXPECT_EQ(out["mappings"][0]["mode"], "http");
  EXPECT_EQ(out["mappings"][0]["server"]["tls"], false);
}

TEST(SerializeConfig, TwoMappingsKeepTheirOrder) {
  ForwardingConfig c = parse_config(kOraySample);
  Mapping second = c.mappings[0];
  second.domain = "YY.xicp.fun";
  c.mappings.push_back(second);
  const Json out = Json::parse(serialize_config(c));
  ASSERT_EQ(out["mappings"].size(), 2u);
  EXPECT_EQ(out["mappings"][0]["domain"], "XX.xicp.fun");
  EXPECT_EQ(out["mappings"][1]["domain"], "YY.xicp.fun");
}

TEST(SerializeConfig, EmptyMappingsSerializeButFailValidation) {
  ForwardingConfig c;
  c.phsl = "XX.oray.net:6061";
  const ForwardingConfig back = parse_config(serialize_config(c));
  EXPECT_TRUE(back.mappings.empty());
  const auto v = validate_config(back);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::NoMappings);
}

TEST(ValidateConfig, SingleViolations) {
  ForwardingConfig zero_port = parse_config(kOraySample);
  zero_port.mappings[0].serviceport = 0;
  auto v = validate_config(zero_port);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::Range);
  EXPECT_EQ(v[0].field, "mappings[0].serviceport");

  ForwardingConfig feature = parse_config(kOraySample);
  feature.mappings[0].server.feature = "xyz";
  v = validate_config(feature);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::Feature);

  ForwardingConfig phsl = parse_config(kOraySample);
  phsl.phsl = "XX.oray.net";
  v = validate_config(phsl);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::Phsl);

  ForwardingConfig domain = parse_config(kOraySample);
  domain.mappings[0].domain.clear();
  v = validate_config(domain);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::EmptyDomain);
}

TEST(ValidateConfig, FeatureTokens) {
  ForwardingConfig c = parse_config(kOraySample);
  for (const char* ok : {"tcp", "udp", "tcp,udp", "udp, tcp"}) {
    c.mappings[0].server.feature = ok;
    EXPECT_TRUE(validate_config(c).empty()) << ok;
  }
  for (const char* bad : {"", "tcp,xyz", ",", "TCP"}) {
    c.mappings[0].server.feature = bad;
    EXPECT_EQ(validate_config(c).size(), 1u) << bad;
  }
}

TEST(ConfigFields, EveryAttackerRewritableFieldIsReachable) {
  ForwardingConfig c = parse_config(kOraySample);
  set_field(c, "phsl", "evil.example:6061");
  set_field(c, "mappings[0].servicehost", "10.0.0.7");
  set_field(c, "mappings[0].serviceport", 8080);
  set_field(c, "mappings[0].server.serverhost", "evil.example");
  set_field(c, "mappings[0].server.serverport", 7000);
  EXPECT_EQ(c.phsl, "evil.example:6061");
  EXPECT_EQ(c.mappings[0].servicehost, "10.0.0.7");
  EXPECT_EQ(c.mappings[0].serviceport, 8080);
  EXPECT_EQ(c.mappings[0].server.serverhost, "evil.example");
  EXPECT_EQ(c.mappings[0].server.serverport, 7000);
  EXPECT_EQ(get_field(c, "mappings[0].server.serverport"), 7000);
  EXPECT_EQ(get_field(c, "phsl"), "evil.example:6061");
}

TEST(ConfigFields, BadPaths) {
  ForwardingConfig c = parse_config(kOraySample);
  try {
    set_field(c, "mappings[0].nope", "x");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ConfigErrc::UnknownField);
  }
  try {
    set_field(c, "mappings[3].domain", "x");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ConfigErrc::Range);
  }
  try {
    set_field(c, "mappings[0].serviceport", "eighty");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ConfigErrc::Type);
  }
  EXPECT_THROW(get_field(c, "server"), ConfigError);
}

TEST(SplitHostPort, Cases) {
  EXPECT_EQ(split_host_port("XX.oray.net:6061").host, "XX.oray.net");
  EXPECT_EQ(split_host_port("XX.oray.net:6061").port, 6061);
  EXPECT_EQ(split_host_port("host").port, 0);
  EXPECT_EQ(split_host_port("host:").port, 0);
  EXPECT_EQ(split_host_port("host:80x").port, 0);
}

TEST(ConfigProperty, SerializeThenParseIsIdentity) {
  std::mt19937_64 rng(4242);
  for (int i = 0; i < 2000; ++i) {
    const ForwardingConfig c = random_config(rng);
    const std::string text = serialize_config(c);
    const ForwardingConfig back = parse_config(text);
    ASSERT_EQ(back, c) << text;
    ASSERT_EQ(serialize_config(back), text);
  }
}
