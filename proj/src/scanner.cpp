#include "dupnp/scanner.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>

#include "dupnp/errors.hpp"
#include "dupnp/soap.hpp"
#include "dupnp/ssdp.hpp"
#include "dupnp/url.hpp"
#include "dupnp/util.hpp"

namespace dupnp {

std::vector<DiscoveredDevice> discover(const DiscoverConfig& config) {
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw Error(Errc::socket_bind_failure, "socket()");
    timeval tv{0, 200 * 1000};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    unsigned char ttl = 2;
    ::setsockopt(fd, IPPROTO_IP, IP_MULTICAST_TTL, &ttl, sizeof ttl);

    sockaddr_in dest{};
    dest.sin_family = AF_INET;
    dest.sin_port = htons(config.port);
    if (::inet_pton(AF_INET, config.address.c_str(), &dest.sin_addr) != 1) {
        ::close(fd);
        throw Error(Errc::socket_send_failure, "bad address " + config.address);
    }

    ssdp::SearchRequest search;
    search.host = config.address + ":" + std::to_string(config.port);
    search.mx = config.mx;
    search.st = config.st;
    std::string payload = ssdp::serialize_search_request(search);

    for (int i = 0; i < std::max(1, config.repeat); ++i) {
        ::sendto(fd, payload.data(), payload.size(), 0,
                 reinterpret_cast<sockaddr*>(&dest), sizeof dest);
    }

    std::vector<DiscoveredDevice> out;
    std::set<std::string> seen_usn;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(static_cast<int>(config.timeout_seconds * 1000));
    char buf[65536];
    while (std::chrono::steady_clock::now() < deadline) {
        ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n <= 0) continue;
        try {
            ssdp::SearchResponse res =
                ssdp::parse_search_response(std::string_view(buf, static_cast<size_t>(n)));
            if (seen_usn.insert(res.usn).second)
                out.push_back({res.location, res.usn});
        } catch (const Error&) {
            // not a search response; ignore
        }
    }
    ::close(fd);
    return out;
}

namespace {

struct FetchResult {
    int status = 0;
    std::string body;
    std::string content_type;
};

std::optional<FetchResult> http_get(const Url& url, const CrawlConfig& config) {
    for (int attempt = 0; attempt <= config.retries; ++attempt) {
        httplib::Client client(url.host, url.port);
        client.set_connection_timeout(config.timeout_ms / 1000,
                                      (config.timeout_ms % 1000) * 1000);
        client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
        auto res = client.Get(url.path);
        if (res) {
            FetchResult out;
            out.status = res->status;
            out.body = res->body;
            out.content_type = res->get_header_value("Content-Type");
            return out;
        }
    }
    return std::nullopt;
}

struct FetchTask {
    std::string url; // absolute
    DocumentKind kind;
};

// Bounded-parallel GET of all resource URLs; document order is preserved in
// the output so bundles stay deterministic.
void fetch_all(const std::vector<FetchTask>& tasks, const CrawlConfig& config,
               DeviceBundle& bundle, ScanReport& report, std::set<std::string>& stored_paths) {
    struct Slot {
        std::optional<FetchResult> result;
    };
    std::vector<Slot> slots(tasks.size());
    std::atomic<size_t> next{0};
    size_t workers = std::min<size_t>(std::max(1, config.max_parallel_fetches), tasks.size());
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= tasks.size()) return;
                if (auto url = parse_url(tasks[i].url)) slots[i].result = http_get(*url, config);
            }
        });
    }
    for (auto& t : pool) t.join();

    for (size_t i = 0; i < tasks.size(); ++i) {
        const FetchTask& task = tasks[i];
        const auto& result = slots[i].result;
        if (!result || result->status != 200) {
            report.failed_urls.push_back(task.url);
            bundle.manifest.fetch_failures.push_back(
                {task.url, result ? "http " + std::to_string(result->status) : "unreachable"});
            continue;
        }
        StoredDocument doc;
        doc.url = task.url;
        doc.serve_path = url_path(task.url);
        doc.store_path = store_path_for(doc.serve_path);
        while (!stored_paths.insert(doc.store_path).second)
            doc.store_path += "_";
        doc.kind = task.kind;
        doc.content_type = result->content_type;
        doc.bytes = result->body;
        bundle.documents.push_back(std::move(doc));
        ++report.fetched_count;
    }
}

void collect_resource_urls(const desc::DeviceDescription& device, const std::string& base,
                           std::set<std::string>& seen, std::vector<FetchTask>& out,
                           int depth) {
    if (depth > 8) return;
    for (const auto& ref : device.services) {
        std::string url = resolve_url(base, ref.scpd_url);
        if (seen.insert(url).second) out.push_back({url, DocumentKind::scpd});
    }
    for (const auto& purl : device.presentation_urls) {
        std::string url = resolve_url(base, purl);
        if (seen.insert(url).second) out.push_back({url, DocumentKind::presentation});
    }
    for (const auto& iurl : device.icon_urls()) {
        std::string url = resolve_url(base, iurl);
        if (seen.insert(url).second) out.push_back({url, DocumentKind::presentation});
    }
    for (const auto& embedded : device.embedded_devices)
        collect_resource_urls(embedded, base, seen, out, depth + 1);
}

} // namespace

DeviceBundle crawl(const std::string& location, ScanReport& report, const CrawlConfig& config) {
    auto root_url = parse_url(location);
    if (!root_url) throw Error(Errc::root_fetch_failed, "bad location URL " + location);
    auto root_fetch = http_get(*root_url, config);
    if (!root_fetch || root_fetch->status != 200)
        throw Error(Errc::root_fetch_failed,
                    location + (root_fetch ? " http " + std::to_string(root_fetch->status)
                                           : " unreachable"));

    DeviceBundle bundle;
    desc::DeviceDescription root;
    try {
        root = desc::parse_device_description(root_fetch->body);
    } catch (const Error& e) {
        throw Error(Errc::root_fetch_failed, location + ": " + e.what());
    }

    bundle.manifest.source_location = location;
    bundle.manifest.scan_timestamp = iso8601_utc(std::chrono::system_clock::now());
    bundle.manifest.root_serve_path = url_path(location);

    StoredDocument root_doc;
    root_doc.url = location;
    root_doc.serve_path = bundle.manifest.root_serve_path;
    root_doc.store_path = store_path_for(root_doc.serve_path);
    root_doc.kind = DocumentKind::root;
    root_doc.content_type = root_fetch->content_type;
    root_doc.bytes = root_fetch->body;
    bundle.documents.push_back(std::move(root_doc));
    ++report.fetched_count;

    // The observed Server header keeps the emulated instance's HTTP identity
    // consistent with the original device.
    {
        httplib::Client client(root_url->host, root_url->port);
        client.set_connection_timeout(config.timeout_ms / 1000,
                                      (config.timeout_ms % 1000) * 1000);
        if (auto res = client.Head(root_url->path)) {
            bundle.manifest.server_header = res->get_header_value("Server");
        }
    }

    std::string base = root.url_base ? *root.url_base : location;
    std::set<std::string> seen{location};
    std::vector<FetchTask> tasks;
    collect_resource_urls(root, base, seen, tasks, 0);

    std::set<std::string> stored_paths{store_path_for(bundle.manifest.root_serve_path)};
    fetch_all(tasks, config, bundle, report, stored_paths);

    rebuild_curated(bundle);
    return bundle;
}

std::string snapshot_variable_for(const CuratedService& service,
                                  const desc::ActionArgument& out_arg) {
    const std::string& related = out_arg.related_state_variable;
    bool is_transfer_var = to_lower(related).rfind("a_arg_type_", 0) == 0;
    if (is_transfer_var && service.scpd && service.scpd->variable(out_arg.name))
        return out_arg.name;
    return related;
}

void scan_state(DeviceBundle& bundle, const std::string& control_base, ScanReport& report,
                const CrawlConfig& config) {
    auto base_url = parse_url(control_base);
    if (!base_url) throw Error(Errc::control_unreachable, "bad control base " + control_base);

    httplib::Client client(base_url->host, base_url->port);
    client.set_connection_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
    client.set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);

    size_t attempted = 0;
    size_t got_response = 0;

    // Sequential on purpose: scanning must not perturb device state ordering.
    for (const auto& svc : bundle.services) {
        if (!svc.scpd) continue;
        for (const auto& action : svc.scpd->actions) {
            if (desc::classify_action(action) != desc::ActionClass::read) continue;
            ++attempted;

            soap::ActionInvocation inv;
            inv.service_type = svc.ref.service_type;
            inv.action_name = action.name;
            http::Request soap_req =
                soap::build_action_request(inv, svc.control_serve_path, base_url->authority());

            // httplib supplies Host/Content-Type/Length itself.
            httplib::Headers headers{{"SOAPACTION", inv.soap_action()}};
            auto res = client.Post(svc.control_serve_path, headers, soap_req.body,
                                   soap::k_content_type);
            if (!res) {
                report.invoked_actions.push_back({svc.key, action.name, "transport error"});
                continue;
            }
            ++got_response;

            http::Response parsed;
            parsed.status = res->status;
            parsed.body = res->body;
            soap::ActionResult result;
            try {
                result = soap::parse_action_response(parsed, action);
            } catch (const Error& e) {
                report.invoked_actions.push_back({svc.key, action.name,
                                                  std::string("bad response: ") + e.what()});
                continue;
            }
            if (const auto* fault = std::get_if<soap::ActionFault>(&result)) {
                report.invoked_actions.push_back(
                    {svc.key, action.name, "fault " + std::to_string(fault->error_code)});
                continue;
            }
            const auto& ok = std::get<soap::ActionSuccess>(result);
            report.invoked_actions.push_back({svc.key, action.name, "ok"});
            for (size_t i = 0; i < ok.out_arguments.size(); ++i) {
                // Pair returned values with declared out arguments by name.
                const auto& out_arg = ok.out_arguments[i];
                for (const auto& decl : action.arguments) {
                    if (decl.direction == desc::Direction::out && decl.name == out_arg.name) {
                        std::string var = snapshot_variable_for(svc, decl);
                        bundle.snapshot[svc.key + "/" + var] = out_arg.value;
                        break;
                    }
                }
            }
        }
    }

    if (attempted > 0 && got_response == 0)
        throw Error(Errc::control_unreachable, control_base);

    report.unresolved_variables = apply_snapshot_defaults(bundle);
}

std::string ScanReport::to_text() const {
    std::string out;
    out += "fetched: " + std::to_string(fetched_count) + "\n";
    out += "failed_urls: " + std::to_string(failed_urls.size()) + "\n";
    for (const auto& u : failed_urls) out += "  " + u + "\n";
    out += "invoked_actions: " + std::to_string(invoked_actions.size()) + "\n";
    for (const auto& a : invoked_actions)
        out += "  " + a.service_key + "/" + a.action + ": " + a.outcome + "\n";
    out += "unresolved_variables: " + std::to_string(unresolved_variables.size()) + "\n";
    for (const auto& v : unresolved_variables) out += "  " + v + "\n";
    return out;
}

} // namespace dupnp
