// dupnp — clone UPnP devices into portable bundles and run honeypot fleets
// from them. Subcommands: scan, serve, bench, logs, bundle-inspect.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "dupnp/bench.hpp"
#include "dupnp/bundle.hpp"
#include "dupnp/deployment.hpp"
#include "dupnp/errors.hpp"
#include "dupnp/scanner.hpp"
#include "dupnp/url.hpp"
#include "dupnp/util.hpp"

namespace {

constexpr int k_exit_ok = 0;
constexpr int k_exit_validation = 1;
constexpr int k_exit_runtime = 2;

volatile std::sig_atomic_t g_signal = 0;

void on_signal(int sig) { g_signal = sig; }

int cmd_scan(const std::string& st, double timeout, const std::string& address, uint16_t port,
             const std::string& uuid_filter, const std::string& location,
             const std::string& output) {
    using namespace dupnp;
    std::string target_location = location;
    if (target_location.empty()) {
        DiscoverConfig dc;
        dc.st = st;
        dc.timeout_seconds = timeout;
        dc.address = address;
        dc.port = port;
        auto devices = discover(dc);
        if (!uuid_filter.empty()) {
            std::erase_if(devices, [&](const DiscoveredDevice& d) {
                return d.usn.find(uuid_filter) == std::string::npos;
            });
        }
        if (devices.empty()) {
            std::cout << "no devices found (st=" << st << ", timeout=" << timeout << "s)\n";
            return k_exit_ok; // an empty result is not an error
        }
        for (const auto& d : devices)
            std::cout << "found " << d.usn << " at " << d.location << "\n";
        target_location = devices.front().location;
    }

    ScanReport report;
    DeviceBundle bundle = crawl(target_location, report);
    auto base = parse_url(target_location);
    try {
        scan_state(bundle, base ? base->scheme + "://" + base->authority() : target_location,
                   report);
    } catch (const Error& e) {
        if (e.code() != Errc::control_unreachable) throw;
        // Crawl succeeded; the bundle is still usable with declared defaults.
        report.unresolved_variables = apply_snapshot_defaults(bundle);
        std::cout << "warning: control endpoint unreachable, snapshot uses defaults\n";
    }
    save_bundle(bundle, output);
    std::cout << report.to_text();
    std::cout << "bundle written to " << output << "\n";
    return k_exit_ok;
}

int cmd_serve(const std::string& config_path) {
    using namespace dupnp;
    DeploymentConfig config = load_deployment_config(config_path);
    Deployment deployment(std::move(config),
                          std::filesystem::absolute(config_path).parent_path());
    deployment.start();

    std::cout << deployment.instances().size() << " instance(s) up, ssdp on "
              << deployment.config().ssdp.address << ":" << deployment.config().ssdp.port
              << "\n";
    for (auto* instance : deployment.instances()) {
        std::cout << "  " << instance->identity().uuid << " -> "
                  << instance->identity().location_url() << "\n";
    }
    std::cout.flush();

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (g_signal == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    std::cout << "shutting down" << std::endl;
    deployment.stop();
    return k_exit_ok;
}

int cmd_bench(const std::vector<std::string>& targets, const std::string& action_selector,
              int reps, int concurrency, int warmup, const std::string& root_path,
              size_t fleet_size, const std::string& table_path) {
    using namespace dupnp;
    BenchSpec spec;
    spec.repetitions = reps;
    spec.concurrency = concurrency;
    spec.warmup = warmup;
    spec.fleet_size = fleet_size;

    for (const auto& t : targets) {
        auto url = parse_url(t.find("://") == std::string::npos ? "http://" + t : t);
        if (!url) {
            std::cerr << "bad target " << t << "\n";
            return k_exit_validation;
        }
        auto target = bench_target_from_description(url->host, url->port, root_path,
                                                    action_selector);
        if (!target) {
            std::cerr << "target unreachable or no read action: " << t << "\n";
            continue; // unreachable targets are reported, not fatal
        }
        spec.targets.push_back(*target);
    }
    if (spec.targets.empty()) {
        std::cerr << "no usable bench targets\n";
        return k_exit_runtime;
    }

    BenchReport report = run_bench(spec);
    std::cout << "fleet_size=" << report.fleet_size << " concurrency=" << report.concurrency
              << " wall_ms=" << report.wall_ms << "\n";
    for (const auto& t : report.per_target) {
        std::printf("%s min=%.3fms mean=%.3fms p95=%.3fms max=%.3fms ok=%zu failed=%zu\n",
                    t.target.c_str(), t.min_ms, t.mean_ms, t.p95_ms, t.max_ms, t.ok, t.failed);
    }
    if (!table_path.empty()) {
        std::ofstream out(table_path, std::ios::app);
        out << report.to_table();
    } else {
        std::cout << report.to_table();
    }
    return k_exit_ok;
}

int cmd_logs(const std::string& sink, const std::string& instance, const std::string& layer,
             const std::string& peer, const std::string& since, const std::string& until,
             bool follow) {
    using namespace dupnp;
    if (!std::filesystem::exists(sink)) {
        std::cerr << "sink missing: " << sink << "\n";
        return k_exit_runtime;
    }
    auto since_tp = since.empty() ? std::nullopt : parse_iso8601(since);
    auto until_tp = until.empty() ? std::nullopt : parse_iso8601(until);
    if ((!since.empty() && !since_tp) || (!until.empty() && !until_tp)) {
        std::cerr << "bad time filter (expected ISO 8601)\n";
        return k_exit_validation;
    }
    if (!layer.empty() && !layer_from_string(layer)) {
        std::cerr << "bad layer filter: " << layer
                  << " (ssdp|description|control|eventing|presentation)\n";
        return k_exit_validation;
    }

    auto matches = [&](const InteractionRecord& r) {
        if (!instance.empty() && r.instance_uuid != instance) return false;
        if (!layer.empty() && to_string(r.layer) != layer) return false;
        if (!peer.empty() && r.peer.find(peer) == std::string::npos) return false;
        if (since_tp && r.timestamp < *since_tp) return false;
        if (until_tp && r.timestamp > *until_tp) return false;
        return true;
    };

    // Tail by buffering: only complete lines are consumed, so a record the
    // writer has half-flushed is picked up whole on a later pass.
    std::ifstream in(sink, std::ios::binary);
    std::string pending;
    auto drain = [&] {
        char chunk[8192];
        while (in.read(chunk, sizeof chunk) || in.gcount() > 0) {
            pending.append(chunk, static_cast<size_t>(in.gcount()));
        }
        in.clear(); // keep the stream usable for follow mode
        size_t start = 0;
        size_t nl;
        while ((nl = pending.find('\n', start)) != std::string::npos) {
            std::string_view line(pending.data() + start, nl - start);
            if (auto rec = record_from_line(line)) {
                if (matches(*rec)) std::cout << line << "\n" << std::flush;
            }
            start = nl + 1;
        }
        pending.erase(0, start);
    };
    drain();
    if (follow) {
        std::signal(SIGINT, on_signal);
        while (g_signal == 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
            drain();
        }
    }
    return k_exit_ok;
}

int cmd_bundle_inspect(const std::string& path, bool show_snapshot, bool show_curated) {
    using namespace dupnp;
    DeviceBundle bundle = load_bundle(path);
    std::cout << "uuid: " << bundle.manifest.uuid << "\n";
    std::cout << "friendly_name: " << bundle.manifest.friendly_name << "\n";
    std::cout << "scanned: " << bundle.manifest.scan_timestamp << "\n";
    std::cout << "source: " << bundle.manifest.source_location << "\n";
    std::cout << "root: " << bundle.manifest.root_serve_path << "\n";
    std::cout << "documents: " << bundle.documents.size() << "\n";
    for (const auto& d : bundle.documents)
        std::cout << "  [" << to_string(d.kind) << "] " << d.serve_path << " ("
                  << d.bytes.size() << " bytes)\n";
    std::cout << "services: " << bundle.services.size() << "\n";
    for (const auto& s : bundle.services) {
        std::cout << "  " << s.key << ": " << s.ref.service_type;
        if (s.scpd)
            std::cout << " (" << s.scpd->actions.size() << " actions, "
                      << s.scpd->state_variables.size() << " variables)";
        else
            std::cout << " (scpd missing)";
        std::cout << "\n";
        if (show_curated && s.scpd) {
            for (const auto& a : s.scpd->actions) {
                std::cout << "    action " << a.name << "(";
                bool first = true;
                for (const auto& arg : a.arguments) {
                    if (!first) std::cout << ", ";
                    std::cout << (arg.direction == desc::Direction::in ? "in " : "out ")
                              << arg.name;
                    first = false;
                }
                std::cout << ")\n";
            }
            for (const auto& v : s.scpd->state_variables)
                std::cout << "    variable " << v.name << ": " << v.data_type_text
                          << (v.send_events ? " [evented]" : "") << "\n";
        }
    }
    if (show_snapshot) {
        std::cout << "snapshot: " << bundle.snapshot.size() << " entries\n";
        for (const auto& [k, v] : bundle.snapshot) std::cout << "  " << k << "=" << v << "\n";
    }
    return k_exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"UPnP device cloning honeypot framework"};
    app.require_subcommand(1);

    // scan
    auto* scan = app.add_subcommand("scan", "Discover and clone a device into a bundle");
    std::string scan_st = "upnp:rootdevice";
    double scan_timeout = 2.0;
    std::string scan_address = "239.255.255.250";
    uint16_t scan_port = 1900;
    std::string scan_uuid, scan_location, scan_output;
    scan->add_option("--st", scan_st, "Search target");
    scan->add_option("--timeout", scan_timeout, "Discovery timeout in seconds");
    scan->add_option("--address", scan_address, "SSDP address");
    scan->add_option("--port", scan_port, "SSDP port");
    scan->add_option("--uuid", scan_uuid, "Select the device whose USN contains this string");
    scan->add_option("--location", scan_location,
                     "Skip discovery, crawl this description URL directly");
    scan->add_option("-o,--output", scan_output, "Bundle output directory")->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Deploy honeypot instances from a config");
    std::string serve_config;
    serve->add_option("-c,--config", serve_config, "Deployment config (JSON)")->required();

    // bench
    auto* bench = app.add_subcommand("bench", "Measure response time of running instances");
    std::vector<std::string> bench_targets;
    std::string bench_action, bench_root = "/setup.xml", bench_table;
    int bench_reps = 20, bench_concurrency = 1, bench_warmup = 3;
    size_t bench_fleet = 0;
    bench->add_option("--targets", bench_targets, "host:port endpoints")->required();
    bench->add_option("--action", bench_action,
                      "ServiceType#Action (default: first read action)");
    bench->add_option("--root", bench_root, "Root description path");
    bench->add_option("--reps", bench_reps, "Measured repetitions per target");
    bench->add_option("--concurrency", bench_concurrency, "Concurrent in-flight requests");
    bench->add_option("--warmup", bench_warmup, "Unmeasured warmup requests per target");
    bench->add_option("--fleet-size", bench_fleet, "Deployed fleet size for the report");
    bench->add_option("--table", bench_table, "Append the machine-readable table to this file");

    // logs
    auto* logs = app.add_subcommand("logs", "Filter and tail the interaction log");
    std::string logs_sink, logs_instance, logs_layer, logs_peer, logs_since, logs_until;
    bool logs_follow = false;
    logs->add_option("--sink", logs_sink, "Log sink path")->required();
    logs->add_option("--instance", logs_instance, "Filter by instance uuid");
    logs->add_option("--layer", logs_layer,
                     "Filter by layer (ssdp|description|control|eventing|presentation)");
    logs->add_option("--peer", logs_peer, "Filter by peer substring");
    logs->add_option("--since", logs_since, "ISO 8601 lower bound");
    logs->add_option("--until", logs_until, "ISO 8601 upper bound");
    logs->add_flag("--follow", logs_follow, "Keep reading new records");

    // bundle-inspect
    auto* inspect = app.add_subcommand("bundle-inspect", "Print a bundle's contents");
    std::string inspect_path;
    bool inspect_snapshot = false, inspect_curated = false;
    inspect->add_option("path", inspect_path, "Bundle directory")->required();
    inspect->add_flag("--snapshot", inspect_snapshot, "Print the state snapshot");
    inspect->add_flag("--curated", inspect_curated, "Print actions and variables per service");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*scan)
            return cmd_scan(scan_st, scan_timeout, scan_address, scan_port, scan_uuid,
                            scan_location, scan_output);
        if (*serve) return cmd_serve(serve_config);
        if (*bench)
            return cmd_bench(bench_targets, bench_action, bench_reps, bench_concurrency,
                             bench_warmup, bench_root, bench_fleet, bench_table);
        if (*logs)
            return cmd_logs(logs_sink, logs_instance, logs_layer, logs_peer, logs_since,
                            logs_until, logs_follow);
        if (*inspect) return cmd_bundle_inspect(inspect_path, inspect_snapshot, inspect_curated);
    } catch (const dupnp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == dupnp::Errc::config_invalid ? k_exit_validation : k_exit_runtime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return k_exit_runtime;
    }
    return k_exit_ok;
}
