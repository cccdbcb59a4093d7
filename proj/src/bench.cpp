#include "dupnp/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "dupnp/errors.hpp"
#include "dupnp/url.hpp"

namespace dupnp {

double BenchReport::max_ms() const {
    double m = 0;
    for (const auto& t : per_target) m = std::max(m, t.max_ms);
    return m;
}

double BenchReport::sum_latency_ms() const {
    double s = 0;
    for (const auto& t : per_target) s += t.mean_ms * static_cast<double>(t.ok);
    return s;
}

std::string BenchReport::to_table() const {
    std::string out;
    auto row = [&](const std::string& target, const char* metric, double value) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f", value);
        out += std::to_string(fleet_size) + "\t" + target + "\t" + metric + "\t" + buf + "\n";
    };
    for (const auto& t : per_target) {
        row(t.target, "min_ms", t.min_ms);
        row(t.target, "max_ms", t.max_ms);
        row(t.target, "mean_ms", t.mean_ms);
        row(t.target, "p95_ms", t.p95_ms);
    }
    return out;
}

namespace {

struct TargetRun {
    std::vector<double> latencies_ms;
    size_t failed = 0;
};

void run_target(const BenchTarget& target, int repetitions, int warmup,
                std::counting_semaphore<1024>& gate, TargetRun& out) {
    httplib::Client client(target.host, target.port);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(5, 0);
    client.set_keep_alive(true);
    client.set_tcp_nodelay(true);

    soap::ActionInvocation inv;
    inv.service_type = target.service_type;
    inv.action_name = target.action_name;
    http::Request soap_req = soap::build_action_request(
        inv, target.control_path, target.host + ":" + std::to_string(target.port));
    httplib::Headers headers{{"SOAPACTION", inv.soap_action()}};

    for (int i = 0; i < warmup + repetitions; ++i) {
        gate.acquire();
        auto start = std::chrono::steady_clock::now();
        auto res = client.Post(target.control_path, headers, soap_req.body,
                               soap::k_content_type);
        auto elapsed = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        gate.release();
        if (i < warmup) continue;
        if (res && res->status == 200) {
            out.latencies_ms.push_back(elapsed);
        } else {
            ++out.failed;
        }
    }
}

BenchTargetResult summarize(const std::string& label, TargetRun& run) {
    BenchTargetResult r;
    r.target = label;
    r.failed = run.failed;
    r.ok = run.latencies_ms.size();
    if (run.latencies_ms.empty()) return r;
    std::sort(run.latencies_ms.begin(), run.latencies_ms.end());
    r.min_ms = run.latencies_ms.front();
    r.max_ms = run.latencies_ms.back();
    double sum = 0;
    for (double v : run.latencies_ms) sum += v;
    r.mean_ms = sum / static_cast<double>(run.latencies_ms.size());
    size_t idx = static_cast<size_t>(
        std::ceil(0.95 * static_cast<double>(run.latencies_ms.size())));
    r.p95_ms = run.latencies_ms[std::min(idx == 0 ? 0 : idx - 1, run.latencies_ms.size() - 1)];
    return r;
}

} // namespace

BenchReport run_bench(const BenchSpec& spec) {
    if (spec.repetitions < 1) throw Error(Errc::config_invalid, "repetitions must be >= 1");
    if (spec.targets.empty()) throw Error(Errc::config_invalid, "no bench targets");
    int concurrency = std::max(1, spec.concurrency);

    std::counting_semaphore<1024> gate(std::min(concurrency, 1024));
    std::vector<TargetRun> runs(spec.targets.size());
    std::vector<std::thread> threads;

    auto wall_start = std::chrono::steady_clock::now();
    for (size_t i = 0; i < spec.targets.size(); ++i) {
        threads.emplace_back([&, i] {
            run_target(spec.targets[i], spec.repetitions, spec.warmup, gate, runs[i]);
        });
    }
    for (auto& t : threads) t.join();

    BenchReport report;
    report.fleet_size = spec.fleet_size ? spec.fleet_size : spec.targets.size();
    report.concurrency = concurrency;
    report.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - wall_start)
                         .count();
    for (size_t i = 0; i < spec.targets.size(); ++i)
        report.per_target.push_back(summarize(spec.targets[i].label(), runs[i]));
    return report;
}

std::optional<BenchTarget> bench_target_from_description(const std::string& host, uint16_t port,
                                                         const std::string& root_path,
                                                         const std::string& action_selector) {
    httplib::Client client(host, port);
    client.set_connection_timeout(5, 0);
    auto res = client.Get(root_path);
    if (!res || res->status != 200) return std::nullopt;

    desc::DeviceDescription root;
    try {
        root = desc::parse_device_description(res->body);
    } catch (const Error&) {
        return std::nullopt;
    }

    std::string want_service, want_action;
    if (!action_selector.empty()) {
        size_t hash = action_selector.find('#');
        if (hash == std::string::npos) return std::nullopt;
        want_service = action_selector.substr(0, hash);
        want_action = action_selector.substr(hash + 1);
    }

    std::string base = "http://" + host + ":" + std::to_string(port) + root_path;
    for (const auto& ref : root.services) {
        if (!want_service.empty() && ref.service_type != want_service) continue;
        std::string scpd_path = url_path(resolve_url(base, ref.scpd_url));
        auto scpd_res = client.Get(scpd_path);
        if (!scpd_res || scpd_res->status != 200) continue;
        desc::ServiceDescription scpd;
        try {
            scpd = desc::parse_service_description(scpd_res->body);
        } catch (const Error&) {
            continue;
        }
        for (const auto& action : scpd.actions) {
            if (desc::classify_action(action) != desc::ActionClass::read) continue;
            if (!want_action.empty() && action.name != want_action) continue;
            BenchTarget target;
            target.host = host;
            target.port = port;
            target.control_path = url_path(resolve_url(base, ref.control_url));
            target.service_type = ref.service_type;
            target.action_name = action.name;
            return target;
        }
    }
    return std::nullopt;
}

} // namespace dupnp
