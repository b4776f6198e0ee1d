#pragma once

#include "pfs/measure.hpp"

// Real GET requests, for measuring live hosts. TLS certificates are not
// checked: any HTTP answer at all counts as alive.
class HttplibProber : public pfs::measure::HttpProber {
 public:
  pfs::measure::ProbeOutcome get(const std::string& target, const std::string& scheme,
                                 double timeout_seconds) override;
};
