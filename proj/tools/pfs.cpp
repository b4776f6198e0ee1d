#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "demos.hpp"
#include "http_prober.hpp"
#include "pfs/measure.hpp"
#include "pfs/scenario.hpp"

using namespace pfs;

namespace {

// PFS_SEED, when set, wins over --seed.
std::uint64_t effective_seed(std::uint64_t flag, bool flag_given, std::uint64_t fallback) {
  if (const char* env = std::getenv("PFS_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      std::cerr << "ignoring PFS_SEED=" << env << ": not a number\n";
    }
  }
  return flag_given ? flag : fallback;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw measure::MeasureError(measure::MeasureErrc::Fixture, "cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

int scenario_cmd(const std::string& which, std::uint64_t seed, bool seed_given, const std::string& trace_path) {
  scenario::ScenarioSpec spec;
  try {
    spec = scenario::load_spec(which);
  } catch (const scenario::ScenarioError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  spec.seed = effective_seed(seed, seed_given, spec.seed);
  const scenario::ScenarioResult r = scenario::run_scenario(spec);
  for (const std::string& line : r.transcript) std::cout << line << "\n";
  if (!trace_path.empty() && !write_trace(trace_path, sim::to_jsonl(r.trace))) {
    std::cerr << "cannot write " << trace_path << "\n";
    return 2;
  }
  return r.exit_code;
}

int snowball_cmd(const std::string& seeds_csv, const std::string& pdns_path, std::size_t fanout) {
  std::set<std::string> seeds;
  std::stringstream ss(seeds_csv);
  for (std::string s; std::getline(ss, s, ',');) {
    if (!s.empty()) seeds.insert(s);
  }
  const measure::PdnsFixture pdns = measure::PdnsFixture::load_file(pdns_path);
  measure::SnowballOptions opts;
  opts.fanout_cap = fanout;
  for (const std::string& apex : measure::snowball_apex_discovery(seeds, pdns, opts)) std::cout << apex << "\n";
  return 0;
}

int alive_cmd(const std::string& targets_path, double timeout, const std::string& responders, std::size_t workers) {
  const std::vector<std::string> targets = read_lines(targets_path);
  std::unique_ptr<measure::HttpProber> prober;
  if (responders.empty()) {
    prober = std::make_unique<HttplibProber>();
  } else {
    std::ifstream in(responders);
    if (!in) throw measure::MeasureError(measure::MeasureErrc::Fixture, "cannot open " + responders);
    prober = std::make_unique<measure::FixtureProber>(measure::FixtureProber::load_jsonl(in));
  }
  for (const measure::AliveResult& r : measure::test_aliveness_many(targets, *prober, timeout, workers)) {
    nlohmann::ordered_json j{{"target", r.target}, {"alive", r.alive}, {"via", r.via}};
    j["status"] = r.status ? nlohmann::ordered_json(*r.status) : nlohmann::ordered_json();
    std::cout << j.dump() << "\n";
  }
  return 0;
}

int origin_cmd(const std::string& fqdn, const std::string& apex) {
  if (const auto ip = measure::decode_origin_ip(fqdn, apex)) {
    std::cout << *ip << "\n";
    return 0;
  }
  std::cerr << "no origin IP encoded in " << fqdn << "\n";
  return 1;
}

int lifetime_cmd(const std::string& log_path) {
  std::ifstream in(log_path);
  if (!in) throw measure::MeasureError(measure::MeasureErrc::Fixture, "cannot open " + log_path);
  int status = 0;
  for (const auto& [domain, log] : measure::load_observations(in)) {
    nlohmann::ordered_json j{{"domain", domain}};
    try {
      const measure::LifetimeMetrics m = measure::compute_lifetime_metrics(log);
      j["lifetime_days"] = m.lifetime_days;
      j["activeness_days"] = m.activeness_days;
    } catch (const measure::MeasureError& e) {
      j["error"] = e.what();
      status = 1;
    }
    std::cout << j.dump() << "\n";
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Port forwarding service model: simulated servers, agents, attacks, and measurement tools"};
  app.require_subcommand(1);

  ServerDemoOptions server_opts;
  std::uint64_t server_seed = 0;
  CLI::App* server_cmd = app.add_subcommand("server", "Run a relay server with one agent and visitor");
  server_cmd->add_option("--apex", server_opts.apex, "Apex domain PFW names are issued under")->capture_default_str();
  server_cmd->add_option("--style", server_opts.style, "Agent protocol: ngrok or oray")->capture_default_str();
  server_cmd->add_flag("--require-confirmation", server_opts.require_confirmation,
                       "Only register mappings with a signed TEE confirmation");
  CLI::Option* server_seed_opt = server_cmd->add_option("--seed", server_seed, "Random seed");
  server_cmd->add_option("--basic-auth", server_opts.basic_auth, "Protect the PFW with user:pass");
  server_cmd->add_option("--ip-block", server_opts.ip_block, "Deny this visitor address or CIDR");
  server_cmd->add_option("--ua-filter", server_opts.ua_filter, "Allow only visitors whose User-Agent matches this regex");
  server_cmd->add_option("--visitor-auth", server_opts.visitor_auth, "Credentials the visitor sends, user:pass");
  server_cmd->add_option("--visitor-ua", server_opts.visitor_ua, "User-Agent the visitor sends")->capture_default_str();
  server_cmd->add_option("--trace", server_opts.trace_path, "Write the event trace as JSONL");

  AgentDemoOptions agent_opts;
  std::uint64_t agent_seed = 0;
  CLI::App* agent_cmd = app.add_subcommand("agent", "Run an agent from a configuration file");
  agent_cmd->add_option("--config", agent_opts.config_path, "Forwarding configuration (JSON)")->required();
  agent_cmd->add_option("--style", agent_opts.style, "oray or ngrok")->capture_default_str();
  agent_cmd->add_option("--heartbeat", agent_opts.heartbeat, "Heartbeat interval in seconds, 0 disables")
      ->capture_default_str();
  CLI::Option* agent_seed_opt = agent_cmd->add_option("--seed", agent_seed, "Random seed");
  agent_cmd->add_option("--trace", agent_opts.trace_path, "Write the event trace as JSONL");

  std::string scenario_name;
  std::uint64_t scenario_seed = 0;
  std::string scenario_trace;
  CLI::App* scenario_cmd_app = app.add_subcommand("scenario", "Run a built-in or JSON scenario");
  scenario_cmd_app->add_option("scenario", scenario_name, "mitm-data, inject-config, restart-trigger, "
                                                          "mitigation-demo, or a spec file")
      ->required();
  CLI::Option* scenario_seed_opt = scenario_cmd_app->add_option("--seed", scenario_seed, "Override the spec's seed");
  scenario_cmd_app->add_option("--trace", scenario_trace, "Write the event trace as JSONL");

  CLI::App* measure = app.add_subcommand("measure", "Measurement tools");
  measure->require_subcommand(1);

  std::string seeds_csv;
  std::string pdns_path;
  std::size_t fanout = measure::SnowballOptions{}.fanout_cap;
  CLI::App* snowball = measure->add_subcommand("snowball", "Discover apex domains from passive DNS");
  snowball->add_option("--seeds", seeds_csv, "Comma-separated seed apexes")->required();
  snowball->add_option("--pdns", pdns_path, "pDNS records, JSONL")->required()->check(CLI::ExistingFile);
  snowball->add_option("--fanout-cap", fanout, "Skip IPs hosting more domains than this")->capture_default_str();

  std::string targets_path;
  double timeout = measure::kDefaultProbeTimeout;
  std::string responders;
  std::size_t workers = 8;
  CLI::App* alive = measure->add_subcommand("alive", "Probe targets over HTTP and HTTPS");
  alive->add_option("--targets", targets_path, "One host per line")->required()->check(CLI::ExistingFile);
  alive->add_option("--timeout", timeout, "Seconds per request")->capture_default_str();
  alive->add_option("--responders", responders, "Canned responses (JSONL) instead of the network")
      ->check(CLI::ExistingFile);
  alive->add_option("--workers", workers, "Concurrent probes")->capture_default_str()->check(CLI::PositiveNumber);

  std::string fqdn;
  std::string apex;
  CLI::App* origin = measure->add_subcommand("origin", "Decode the origin IP from a free-tier PFW name");
  origin->add_option("--fqdn", fqdn, "PFW domain")->required();
  origin->add_option("--apex", apex, "Apex domain")->required();

  std::string log_path;
  CLI::App* lifetime = measure->add_subcommand("lifetime", "Lifetime and activeness per domain");
  lifetime->add_option("--log", log_path, "Observation log, JSONL")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*server_cmd) {
      server_opts.seed = effective_seed(server_seed, server_seed_opt->count() > 0, 0);
      return run_server_demo(server_opts);
    }
    if (*agent_cmd) {
      agent_opts.seed = effective_seed(agent_seed, agent_seed_opt->count() > 0, 0);
      return run_agent_demo(agent_opts);
    }
    if (*scenario_cmd_app) {
      return scenario_cmd(scenario_name, scenario_seed, scenario_seed_opt->count() > 0, scenario_trace);
    }
    if (*snowball) return snowball_cmd(seeds_csv, pdns_path, fanout);
    if (*alive) return alive_cmd(targets_path, timeout, responders, workers);
    if (*origin) return origin_cmd(fqdn, apex);
    if (*lifetime) return lifetime_cmd(log_path);
  } catch (const measure::MeasureError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
