#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pfs/error.hpp"

namespace pfs::measure {

enum class MeasureErrc { NoSeeds, Probe, EmptyLog, Fixture, BadArgument };

using MeasureError = BasicError<MeasureErrc>;

// Calendar date at day resolution.
struct Date {
  std::chrono::sys_days days{};

  auto operator<=>(const Date&) const = default;
};

// Parses "YYYY-MM-DD". Throws MeasureError(Fixture) on malformed input.
Date parse_date(std::string_view text);
std::string format_date(Date d);
inline int days_between(Date from, Date to) { return static_cast<int>((to.days - from.days).count()); }

enum class RrType { A, AAAA, CNAME };

struct PdnsRecord {
  std::string rrname;
  RrType rrtype = RrType::A;
  std::string rdata;
  Date time_first;
  Date time_last;
  std::uint64_t count = 1;
};

// Fixture line: {"rrname", "rrtype", "rdata", "time_first", "time_last", "count"}.
PdnsRecord parse_pdns_line(std::string_view line);

class PdnsSource {
 public:
  virtual ~PdnsSource() = default;
  // Records whose rrname equals `name`.
  virtual std::vector<PdnsRecord> forward(const std::string& name) const = 0;
  // Records whose rdata equals `value`.
  virtual std::vector<PdnsRecord> reverse(const std::string& value) const = 0;
};

class PdnsFixture : public PdnsSource {
 public:
  void add(PdnsRecord record);
  static PdnsFixture load_jsonl(std::istream& in);
  static PdnsFixture load_file(const std::string& path);

  std::vector<PdnsRecord> forward(const std::string& name) const override;
  std::vector<PdnsRecord> reverse(const std::string& value) const override;
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<PdnsRecord> records_;
  std::multimap<std::string, std::size_t> by_name_;
  std::multimap<std::string, std::size_t> by_rdata_;
};

struct SnowballOptions {
  std::size_t max_rounds = 64;
  // IPs hosting more domains than this are not expanded.
  std::size_t fanout_cap = 1000;
};

// Alternates apex -> hosting IPs (A/AAAA) and IP -> further apexes until a
// fixpoint or max_rounds. The result always contains the seeds.
std::set<std::string> snowball_apex_discovery(const std::set<std::string>& seeds, const PdnsSource& pdns,
                                              const SnowballOptions& options = {});

inline constexpr int kRecencyWindowDays = 7;

// today - time_last <= 7 days, boundary included.
bool is_recently_active(const PdnsRecord& record, Date today);

struct ProbeOutcome {
  bool responded = false;
  int status = 0;
  double elapsed_seconds = 0.0;
};

class HttpProber {
 public:
  virtual ~HttpProber() = default;
  // scheme is "http" or "https". Must be safe to call concurrently.
  virtual ProbeOutcome get(const std::string& target, const std::string& scheme, double timeout_seconds) = 0;
};

struct AliveResult {
  std::string target;
  bool alive = false;
  std::set<std::string> via;
  std::optional<int> status;
};

inline constexpr double kDefaultProbeTimeout = 10.0;

// Alive when either scheme yields any HTTP response within the timeout,
// whatever its status code.
AliveResult test_aliveness(const std::string& target, HttpProber& prober, double timeout = kDefaultProbeTimeout);

std::vector<AliveResult> test_aliveness_many(const std::vector<std::string>& targets, HttpProber& prober,
                                             double timeout = kDefaultProbeTimeout, std::size_t workers = 8);

// Canned prober: per target and scheme, either no listener or a response
// with a status after some latency.
class FixtureProber : public HttpProber {
 public:
  struct Responder {
    int status = 200;
    double latency = 0.0;
  };

  void set(const std::string& target, const std::string& scheme, Responder r);
  // Lines: {"target": str, "http": {"status": int, "latency": num} | null, "https": ...}
  static FixtureProber load_jsonl(std::istream& in);

  ProbeOutcome get(const std::string& target, const std::string& scheme, double timeout_seconds) override;

 private:
  std::map<std::pair<std::string, std::string>, Responder> responders_;
};

// Recovers the egress IP from a free-tier name "{random}-{ip-with-dashes}.{apex}".
std::optional<std::string> decode_origin_ip(std::string_view fqdn, std::string_view apex);

struct ObservationLog {
  std::string domain;
  std::map<Date, bool> entries;
};

// Lines: {"domain": str, "date": "YYYY-MM-DD", "active": bool}. Duplicate
// (domain, date) pairs are rejected.
std::map<std::string, ObservationLog> load_observations(std::istream& in);

struct LifetimeMetrics {
  int lifetime_days = 0;    // last active date - first active date
  int activeness_days = 0;  // number of active dates
};

LifetimeMetrics compute_lifetime_metrics(const ObservationLog& log);

}  // namespace pfs::measure
