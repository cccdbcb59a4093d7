#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dupnp/description.hpp"
#include "dupnp/soap.hpp"

namespace dupnp {

// One benchmark target: a control endpoint plus the read action invoked on it.
struct BenchTarget {
    std::string host;
    uint16_t port = 0;
    std::string control_path;
    std::string service_type;
    std::string action_name;

    std::string label() const { return host + ":" + std::to_string(port); }
};

struct BenchSpec {
    std::vector<BenchTarget> targets;
    int repetitions = 20;
    int concurrency = 1;
    int warmup = 3;
    size_t fleet_size = 0; // deployed instances behind this run; 0: targets.size()
};

struct BenchTargetResult {
    std::string target;
    double min_ms = 0;
    double max_ms = 0;
    double mean_ms = 0;
    double p95_ms = 0;
    size_t ok = 0;
    size_t failed = 0; // transport failures (target unreachable)
};

struct BenchReport {
    size_t fleet_size = 0;
    int concurrency = 0;
    double wall_ms = 0;
    std::vector<BenchTargetResult> per_target;

    double max_ms() const;
    double sum_latency_ms() const;
    // One row per (fleet_size, target, metric), tab-separated.
    std::string to_table() const;
};

// Issues the configured read actions with bounded concurrency and wall-clock
// per-request latency measurement. Unreachable targets are reported, not
// fatal.
BenchReport run_bench(const BenchSpec& spec);

// Builds a target from an instance's root description: the first service
// with a read action wins, or the named "ServiceType#Action" when given.
std::optional<BenchTarget> bench_target_from_description(const std::string& host, uint16_t port,
                                                         const std::string& root_path,
                                                         const std::string& action_selector);

} // namespace dupnp
