#pragma once

#include <cstdint>
#include <optional>
#include <string>

// Self-contained simnet runs behind `pfs server` and `pfs agent`. Each prints
// a transcript to stdout and returns the process exit code.

struct ServerDemoOptions {
  std::string apex = "pfs.test";
  std::string style = "ngrok";
  bool require_confirmation = false;
  std::uint64_t seed = 0;
  std::optional<std::string> basic_auth;  // "user:pass"
  std::optional<std::string> ip_block;
  std::optional<std::string> ua_filter;
  std::optional<std::string> visitor_auth;  // "user:pass" sent by the visitor
  std::string visitor_ua = "Mozilla/5.0";
  std::optional<std::string> trace_path;
};

int run_server_demo(const ServerDemoOptions& o);

struct AgentDemoOptions {
  std::string config_path;
  std::string style = "oray";
  double heartbeat = 30.0;
  std::uint64_t seed = 0;
  std::optional<std::string> trace_path;
};

int run_agent_demo(const AgentDemoOptions& o);

// Writes the trace as JSONL; returns false when the file cannot be written.
bool write_trace(const std::string& path, const std::string& jsonl);
