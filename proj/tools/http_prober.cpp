#include "http_prober.hpp"

#include <chrono>
#include <cmath>

#include <httplib.h>

pfs::measure::ProbeOutcome HttplibProber::get(const std::string& target, const std::string& scheme,
                                              double timeout_seconds) {
  const auto whole = static_cast<time_t>(timeout_seconds);
  const auto usec = static_cast<time_t>(std::lround((timeout_seconds - static_cast<double>(whole)) * 1e6));
  httplib::Client client(scheme + "://" + target);
  client.set_connection_timeout(whole, usec);
  client.set_read_timeout(whole, usec);
  client.set_write_timeout(whole, usec);
  client.enable_server_certificate_verification(false);
  client.set_follow_location(false);

  const auto start = std::chrono::steady_clock::now();
  const httplib::Result res = client.Get("/");
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!res) return {false, 0, elapsed};
  return {true, res->status, elapsed};
}
