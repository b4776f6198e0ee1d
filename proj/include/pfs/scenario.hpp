#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pfs/attacks.hpp"
#include "pfs/config.hpp"
#include "pfs/error.hpp"
#include "pfs/simnet.hpp"

// Declarative scenarios: build a simnet topology, install attacks, drive
// visitors and agents, then check what happened.
//
// A spec is JSON: {"name": str, "seed": int, "steps": [ {"op": ..., ...}, ... ]}.
// Ops that define nodes: service, control, server, tee, agent, visitor, node.
// Ops that act: attack, start, run, visit, push-update, tee-presence, policy,
// expect. Every node an op refers to must be defined by an earlier step.
namespace pfs::scenario {

using Json = config::Json;

enum class ScenarioErrc { Malformed, UnknownScenario };

using ScenarioError = BasicError<ScenarioErrc>;

struct ScenarioSpec {
  std::string name;
  std::uint64_t seed = 0;
  Json steps = Json::array();
};

// Throws ScenarioError(Malformed) when the top-level shape is wrong.
ScenarioSpec parse_spec(const Json& j);

// Problems that make the spec unrunnable: unknown ops, missing fields,
// references to nodes not yet defined. Empty when the spec is valid.
std::vector<std::string> validate_spec(const ScenarioSpec& spec);

struct ScenarioResult {
  int exit_code = 0;  // 0 all expectations hold, 1 one failed, 2 spec invalid
  sim::EventTrace trace;
  std::vector<attacks::AttackReport> reports;
  std::vector<std::string> transcript;
  std::vector<std::string> failures;
};

ScenarioResult run_scenario(const ScenarioSpec& spec);

std::vector<std::string> builtin_names();
std::optional<Json> builtin_spec(std::string_view name);

// A built-in name or a path to a JSON spec file.
ScenarioSpec load_spec(const std::string& name_or_path);

// The Oray-style forwarding configuration the built-in topologies serve.
config::ForwardingConfig demo_config();

}  // namespace pfs::scenario
