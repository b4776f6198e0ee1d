#include "pfs/measure.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace pfs::measure {

namespace {

using Json = nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_hex_token(std::string_view t) {
  return t.size() <= 4 && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isxdigit(c); });
}

std::optional<int> octet(std::string_view t) {
  if (t.empty() || t.size() > 3) return std::nullopt;
  if (t.size() > 1 && t.front() == '0') return std::nullopt;
  int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || v > 255) return std::nullopt;
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

template <typename F>
void for_each_line(std::istream& in, F&& f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(line);
    } catch (const MeasureError& e) {
      throw MeasureError(e.code(), "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Json::exception& e) {
      throw MeasureError(MeasureErrc::Fixture, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

bool address_record(const PdnsRecord& r) { return r.rrtype == RrType::A || r.rrtype == RrType::AAAA; }

}  // namespace

Date parse_date(std::string_view text) {
  const auto bad = [&] { return MeasureError(MeasureErrc::Fixture, "bad date \"" + std::string(text) + "\""); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (std::from_chars(text.data(), text.data() + 4, y).ptr != text.data() + 4 ||
      std::from_chars(text.data() + 5, text.data() + 7, m).ptr != text.data() + 7 ||
      std::from_chars(text.data() + 8, text.data() + 10, d).ptr != text.data() + 10) {
    throw bad();
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw bad();
  return Date{std::chrono::sys_days{ymd}};
}

std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date.days};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

PdnsRecord parse_pdns_line(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw MeasureError(MeasureErrc::Fixture, std::string("malformed pDNS record: ") + e.what());
  }
  PdnsRecord r;
  try {
    r.rrname = lower(j.at("rrname").get<std::string>());
    const std::string type = j.at("rrtype").get<std::string>();
    if (type == "A") {
      r.rrtype = RrType::A;
    } else if (type == "AAAA") {
      r.rrtype = RrType::AAAA;
    } else if (type == "CNAME") {
      r.rrtype = RrType::CNAME;
    } else {
      throw MeasureError(MeasureErrc::Fixture, "unknown rrtype \"" + type + "\"");
    }
    r.rdata = lower(j.at("rdata").get<std::string>());
    r.time_first = parse_date(j.at("time_first").get<std::string>());
    r.time_last = parse_date(j.at("time_last").get<std::string>());
    r.count = j.at("count").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    throw MeasureError(MeasureErrc::Fixture, std::string("malformed pDNS record: ") + e.what());
  }
  if (r.time_first > r.time_last) throw MeasureError(MeasureErrc::Fixture, "time_first after time_last");
  if (r.count < 1) throw MeasureError(MeasureErrc::Fixture, "count must be at least 1");
  return r;
}

void PdnsFixture::add(PdnsRecord record) {
  const std::size_t i = records_.size();
  by_name_.emplace(record.rrname, i);
  by_rdata_.emplace(record.rdata, i);
  records_.push_back(std::move(record));
}

PdnsFixture PdnsFixture::load_jsonl(std::istream& in) {
  PdnsFixture f;
  for_each_line(in, [&](const std::string& line) { f.add(parse_pdns_line(line)); });
  return f;
}

PdnsFixture PdnsFixture::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeasureError(MeasureErrc::Fixture, "cannot open " + path);
  return load_jsonl(in);
}

std::vector<PdnsRecord> PdnsFixture::forward(const std::string& name) const {
  std::vector<PdnsRecord> out;
  const auto [lo, hi] = by_name_.equal_range(name);
  for (auto it = lo; it != hi; ++it) out.push_back(records_[it->second]);
  return out;
}

std::vector<PdnsRecord> PdnsFixture::reverse(const std::string& value) const {
  std::vector<PdnsRecord> out;
  const auto [lo, hi] = by_rdata_.equal_range(value);
  for (auto it = lo; it != hi; ++it) out.push_back(records_[it->second]);
  return out;
}

std::set<std::string> snowball_apex_discovery(const std::set<std::string>& seeds, const PdnsSource& pdns,
                                              const SnowballOptions& options) {
  if (seeds.empty()) throw MeasureError(MeasureErrc::NoSeeds, "snowball discovery needs at least one seed");
  std::set<std::string> domains = seeds;
  std::set<std::string> ips;
  std::set<std::string> frontier = seeds;
  for (std::size_t round = 0; round < options.max_rounds && !frontier.empty(); ++round) {
    std::set<std::string> new_ips;
    for (const std::string& d : frontier) {
      for (const PdnsRecord& r : pdns.forward(d)) {
        if (address_record(r) && !ips.contains(r.rdata)) new_ips.insert(r.rdata);
      }
    }
    ips.insert(new_ips.begin(), new_ips.end());

    std::set<std::string> new_domains;
    for (const std::string& ip : new_ips) {
      std::set<std::string> hosted;
      for (const PdnsRecord& r : pdns.reverse(ip)) {
        if (address_record(r)) hosted.insert(r.rrname);
      }
      if (hosted.size() > options.fanout_cap) continue;
      for (const std::string& d : hosted) {
        if (!domains.contains(d)) new_domains.insert(d);
      }
    }
    domains.insert(new_domains.begin(), new_domains.end());
    frontier = std::move(new_domains);
  }
  return domains;
}

bool is_recently_active(const PdnsRecord& record, Date today) {
  return days_between(record.time_last, today) <= kRecencyWindowDays;
}

AliveResult test_aliveness(const std::string& target, HttpProber& prober, double timeout) {
  if (!(timeout > 0.0)) throw MeasureError(MeasureErrc::BadArgument, "timeout must be positive");
  AliveResult result;
  result.target = target;
  for (const char* scheme : {"http", "https"}) {
    ProbeOutcome o;
    try {
      o = prober.get(target, scheme, timeout);
    } catch (const std::exception& e) {
      throw MeasureError(MeasureErrc::Probe, std::string("probe of ") + scheme + "://" + target + " failed: " + e.what());
    }
    if (o.responded && o.elapsed_seconds <= timeout) {
      result.alive = true;
      result.via.insert(scheme);
      if (!result.status) result.status = o.status;
    }
  }
  return result;
}

std::vector<AliveResult> test_aliveness_many(const std::vector<std::string>& targets, HttpProber& prober,
                                             double timeout, std::size_t workers) {
  std::vector<AliveResult> results(targets.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  const auto work = [&] {
    for (std::size_t i = next++; i < targets.size(); i = next++) {
      try {
        results[i] = test_aliveness(targets[i], prober, timeout);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::max<std::size_t>(1, std::min(workers, targets.size())); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

void FixtureProber::set(const std::string& target, const std::string& scheme, Responder r) {
  responders_[{target, scheme}] = r;
}

FixtureProber FixtureProber::load_jsonl(std::istream& in) {
  FixtureProber p;
  for_each_line(in, [&](const std::string& line) {
    const Json j = Json::parse(line);
    const std::string target = j.at("target").get<std::string>();
    for (const char* scheme : {"http", "https"}) {
      if (!j.contains(scheme) || j[scheme].is_null()) continue;
      p.set(target, scheme, Responder{j[scheme].at("status").get<int>(), j[scheme].value("latency", 0.0)});
    }
  });
  return p;
}

ProbeOutcome FixtureProber::get(const std::string& target, const std::string& scheme, double timeout) {
  const auto it = responders_.find({target, scheme});
  if (it == responders_.end()) return ProbeOutcome{false, 0, timeout};
  if (it->second.latency > timeout) return ProbeOutcome{false, 0, timeout};
  return ProbeOutcome{true, it->second.status, it->second.latency};
}

std::optional<std::string> decode_origin_ip(std::string_view fqdn_in, std::string_view apex_in) {
  std::string fqdn = lower(fqdn_in);
  std::string apex = lower(apex_in);
  while (!fqdn.empty() && fqdn.back() == '.') fqdn.pop_back();
  while (!apex.empty() && (apex.back() == '.' || apex.front() == '.')) {
    if (apex.back() == '.') apex.pop_back();
    if (!apex.empty() && apex.front() == '.') apex.erase(apex.begin());
  }
  if (apex.empty() || fqdn.size() <= apex.size() + 1 || !fqdn.ends_with("." + apex)) return std::nullopt;
  const std::string_view label = std::string_view(fqdn).substr(0, fqdn.size() - apex.size() - 1);
  if (label.find('.') != std::string_view::npos) return std::nullopt;

  std::vector<std::string_view> tokens = split(label, '-');
  if (tokens.size() < 2) return std::nullopt;
  tokens.erase(tokens.begin());  // random prefix

  if (tokens.size() == 4) {
    std::string ip;
    bool ok = true;
    for (std::size_t i = 0; i < 4 && ok; ++i) {
      ok = octet(tokens[i]).has_value();
      if (i) ip += '.';
      ip += tokens[i];
    }
    if (ok) return ip;
  }

  // Between 3 and 8 groups; "::" shows up as empty pieces, which can add one.
  if (tokens.size() < 3 || tokens.size() > 9) return std::nullopt;
  if (!std::all_of(tokens.begin(), tokens.end(), is_hex_token)) return std::nullopt;
  std::string ip;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) ip += ':';
    ip += tokens[i];
  }
  in6_addr addr{};
  if (inet_pton(AF_INET6, ip.c_str(), &addr) != 1) return std::nullopt;
  return ip;
}

std::map<std::string, ObservationLog> load_observations(std::istream& in) {
  std::map<std::string, ObservationLog> logs;
  for_each_line(in, [&](const std::string& line) {
    const Json j = Json::parse(line);
    const std::string domain = lower(j.at("domain").get<std::string>());
    const Date date = parse_date(j.at("date").get<std::string>());
    const bool active = j.at("active").get<bool>();
    ObservationLog& log = logs[domain];
    log.domain = domain;
    if (!log.entries.emplace(date, active).second) {
      throw MeasureError(MeasureErrc::Fixture, "duplicate observation for " + domain + " on " + format_date(date));
    }
  });
  return logs;
}

LifetimeMetrics compute_lifetime_metrics(const ObservationLog& log) {
  std::optional<Date> first;
  std::optional<Date> last;
  int active = 0;
  for (const auto& [date, is_active] : log.entries) {
    if (!is_active) continue;
    if (!first) first = date;
    last = date;
    ++active;
  }
  if (!first) throw MeasureError(MeasureErrc::EmptyLog, "no active observations for " + log.domain);
  return LifetimeMetrics{days_between(*first, *last), active};
}

}  // namespace pfs::measure
