#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dupnp/bundle.hpp"

namespace dupnp {

struct DiscoveredDevice {
    std::string location; // root description URL
    std::string usn;
};

struct DiscoverConfig {
    std::string st = "upnp:rootdevice";
    double timeout_seconds = 2.0;
    int mx = 2;
    std::string address = "239.255.255.250"; // overridable for loopback runs
    uint16_t port = 1900;
    int repeat = 1; // M-SEARCH transmissions; results dedupe by USN
};

// Multicasts an M-SEARCH and collects responses until the timeout.
// An empty result is a valid outcome, not an error.
std::vector<DiscoveredDevice> discover(const DiscoverConfig& config);

struct InvokedAction {
    std::string service_key;
    std::string action;
    std::string outcome; // "ok", "fault <code>", "transport <detail>"
};

struct ScanReport {
    size_t fetched_count = 0;
    std::vector<std::string> failed_urls;
    std::vector<InvokedAction> invoked_actions;
    std::vector<std::string> unresolved_variables; // snapshot keys that got defaults

    size_t attempted_urls() const { return fetched_count + failed_urls.size(); }
    std::string to_text() const;
};

struct CrawlConfig {
    int timeout_ms = 5000;
    int retries = 1;
    int max_parallel_fetches = 4;
};

// Fetches the root description, every SCPD, presentation page and icon it
// declares, stores them verbatim and builds the curated list. Embedded
// devices are crawled through their service lists. Only HTTP GET is issued.
// Throws Error{root_fetch_failed}; per-resource failures land in the report.
DeviceBundle crawl(const std::string& location, ScanReport& report,
                   const CrawlConfig& config = {});

// Invokes every read-classified action over SOAP and snapshots the returned
// values; variables no read action reports get their declared defaults and
// are listed in the report. Throws Error{control_unreachable} when not a
// single invocation got an HTTP response.
void scan_state(DeviceBundle& bundle, const std::string& control_base, ScanReport& report,
                const CrawlConfig& config = {});

// Out-argument → variable mapping: relatedStateVariable, with a fallback to
// name identity when the SCPD relates everything to A_ARG_TYPE_* transfer
// variables.
std::string snapshot_variable_for(const CuratedService& service,
                                  const desc::ActionArgument& out_arg);

} // namespace dupnp
