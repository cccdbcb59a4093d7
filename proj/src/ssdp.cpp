#include "dupnp/ssdp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>

#include "dupnp/errors.hpp"
#include "dupnp/util.hpp"

namespace dupnp::ssdp {

namespace {

constexpr std::string_view k_search_start_line = "M-SEARCH * HTTP/1.1";
constexpr std::string_view k_notify_start_line = "NOTIFY * HTTP/1.1";
constexpr std::string_view k_response_start_line = "HTTP/1.1 200 OK";

struct Datagram {
    std::string start_line;
    http::Headers headers;
};

Datagram parse_datagram(std::string_view raw) {
    size_t eol = raw.find("\r\n");
    if (eol == std::string_view::npos)
        throw Error(Errc::malformed_start_line, "no CRLF after start line");
    Datagram d;
    d.start_line = trim(raw.substr(0, eol));
    std::string_view rest = raw.substr(eol + 2);
    size_t end = rest.find("\r\n\r\n");
    if (end != std::string_view::npos) rest = rest.substr(0, end + 2);
    if (!http::parse_header_lines(rest, d.headers))
        throw Error(Errc::malformed_start_line, "bad header line");
    return d;
}

const std::string& require_header(const Datagram& d, std::string_view name) {
    const std::string* v = http::find_header(d.headers, name);
    if (!v) throw Error(Errc::missing_header, std::string(name));
    return *v;
}

int parse_mx(const std::string& value) {
    // Tolerant: a device must assume a small MX rather than stay silent.
    int mx = 0;
    size_t i = 0;
    while (i < value.size() && std::isdigit(static_cast<unsigned char>(value[i])) && mx < 1000) {
        mx = mx * 10 + (value[i] - '0');
        ++i;
    }
    if (mx < 1) mx = 1;
    if (mx > k_mx_cap_seconds) mx = k_mx_cap_seconds;
    return mx;
}

bool is_known_search_header(std::string_view name) {
    return iequals(name, "HOST") || iequals(name, "MAN") || iequals(name, "MX") ||
           iequals(name, "ST") || iequals(name, "USER-AGENT");
}

int parse_max_age(const std::string& cache_control) {
    size_t eq = cache_control.find('=');
    if (eq == std::string::npos) return k_max_age_seconds;
    try {
        return std::stoi(trim(cache_control.substr(eq + 1)));
    } catch (...) {
        return k_max_age_seconds;
    }
}

} // namespace

SearchRequest parse_search_request(std::string_view datagram) {
    Datagram d = parse_datagram(datagram);
    if (d.start_line != k_search_start_line)
        throw Error(Errc::malformed_start_line, d.start_line);
    SearchRequest req;
    req.host = require_header(d, "HOST");
    req.man = require_header(d, "MAN");
    if (req.man != k_man_discover) throw Error(Errc::bad_man_value, req.man);
    req.mx = parse_mx(require_header(d, "MX"));
    req.st = require_header(d, "ST");
    if (req.st.empty()) throw Error(Errc::missing_header, "ST");
    if (const std::string* ua = http::find_header(d.headers, "USER-AGENT"))
        req.user_agent = *ua;
    for (const auto& h : d.headers) {
        if (!is_known_search_header(h.name)) req.extra_headers.push_back(h);
    }
    return req;
}

std::string serialize_search_request(const SearchRequest& req) {
    std::string out(k_search_start_line);
    out += "\r\n";
    out += "HOST: " + req.host + "\r\n";
    out += "MAN: " + req.man + "\r\n";
    out += "MX: " + std::to_string(req.mx) + "\r\n";
    out += "ST: " + req.st + "\r\n";
    if (req.user_agent) out += "USER-AGENT: " + *req.user_agent + "\r\n";
    for (const auto& h : req.extra_headers) out += h.name + ": " + h.value + "\r\n";
    out += "\r\n";
    return out;
}

SearchResponse parse_search_response(std::string_view datagram) {
    Datagram d = parse_datagram(datagram);
    if (d.start_line != k_response_start_line)
        throw Error(Errc::malformed_start_line, d.start_line);
    SearchResponse res;
    res.location = require_header(d, "LOCATION");
    res.cache_control_max_age = parse_max_age(require_header(d, "CACHE-CONTROL"));
    res.server = http::header_or(d.headers, "SERVER", "");
    res.usn = require_header(d, "USN");
    res.st = require_header(d, "ST");
    return res;
}

std::string serialize_search_response(const SearchResponse& res) {
    std::string out(k_response_start_line);
    out += "\r\n";
    out += "CACHE-CONTROL: max-age=" + std::to_string(res.cache_control_max_age) + "\r\n";
    out += "EXT:\r\n";
    out += "LOCATION: " + res.location + "\r\n";
    out += "SERVER: " + res.server + "\r\n";
    out += "ST: " + res.st + "\r\n";
    out += "USN: " + res.usn + "\r\n";
    out += "\r\n";
    return out;
}

Advertisement parse_advertisement(std::string_view datagram) {
    Datagram d = parse_datagram(datagram);
    if (d.start_line != k_notify_start_line)
        throw Error(Errc::malformed_start_line, d.start_line);
    Advertisement ad;
    ad.host = require_header(d, "HOST");
    ad.nt = require_header(d, "NT");
    ad.usn = require_header(d, "USN");
    const std::string& nts = require_header(d, "NTS");
    if (nts == "ssdp:alive") {
        ad.kind = AdvertisementKind::alive;
        ad.location = require_header(d, "LOCATION");
        ad.cache_control_max_age = parse_max_age(require_header(d, "CACHE-CONTROL"));
        ad.server = http::header_or(d.headers, "SERVER", "");
    } else if (nts == "ssdp:byebye") {
        ad.kind = AdvertisementKind::byebye;
    } else {
        throw Error(Errc::missing_header, "NTS");
    }
    return ad;
}

std::string serialize_advertisement(const Advertisement& ad) {
    std::string out(k_notify_start_line);
    out += "\r\n";
    out += "HOST: " + ad.host + "\r\n";
    if (ad.kind == AdvertisementKind::alive) {
        out += "CACHE-CONTROL: max-age=" + std::to_string(ad.cache_control_max_age) + "\r\n";
        out += "LOCATION: " + ad.location + "\r\n";
        out += "NT: " + ad.nt + "\r\n";
        out += "NTS: ssdp:alive\r\n";
        out += "SERVER: " + ad.server + "\r\n";
    } else {
        out += "NT: " + ad.nt + "\r\n";
        out += "NTS: ssdp:byebye\r\n";
    }
    out += "USN: " + ad.usn + "\r\n";
    out += "\r\n";
    return out;
}

bool match_target(std::string_view st, const InstanceIdentity& instance) {
    if (st == "ssdp:all" || st == "upnp:rootdevice") return true;
    if (st == instance.uuid) return true;
    auto eq = [st](const std::string& t) { return st == t; };
    return std::any_of(instance.device_types.begin(), instance.device_types.end(), eq) ||
           std::any_of(instance.service_types.begin(), instance.service_types.end(), eq);
}

std::vector<std::string> notification_types(const InstanceIdentity& instance) {
    std::vector<std::string> nts;
    nts.reserve(2 + instance.device_types.size() + instance.service_types.size());
    nts.emplace_back("upnp:rootdevice");
    nts.push_back(instance.uuid);
    for (const auto& t : instance.device_types) nts.push_back(t);
    for (const auto& t : instance.service_types) nts.push_back(t);
    return nts;
}

std::string usn_for(const InstanceIdentity& instance, std::string_view nt) {
    // The bare uuid notification carries the uuid alone as its USN.
    if (nt == instance.uuid) return instance.uuid;
    return instance.uuid + "::" + std::string(nt);
}

SearchResponse build_search_response(const InstanceIdentity& instance, std::string_view st) {
    SearchResponse res;
    res.location = instance.location_url();
    res.cache_control_max_age = k_max_age_seconds;
    res.server = instance.server_header;
    res.st = std::string(st);
    res.usn = usn_for(instance, st);
    return res;
}

std::vector<SearchResponse> build_responses(const InstanceIdentity& instance,
                                            std::string_view st) {
    std::vector<SearchResponse> out;
    if (!match_target(st, instance)) return out;
    if (st == "ssdp:all") {
        for (const auto& nt : notification_types(instance))
            out.push_back(build_search_response(instance, nt));
    } else {
        out.push_back(build_search_response(instance, st));
    }
    return out;
}

std::chrono::milliseconds default_search_delay(int mx, std::mt19937_64& rng) {
    if (mx < 1) mx = 1;
    if (mx > k_mx_cap_seconds) mx = k_mx_cap_seconds;
    // Leave ~100ms headroom under MX for network and processing time.
    int span_ms = mx * 1000 - 100;
    std::uniform_int_distribution<int> dist(0, span_ms);
    return std::chrono::milliseconds(dist(rng));
}

// ---------------------------------------------------------------------------
// Responder

namespace {

bool make_sockaddr(const std::string& host, uint16_t port, sockaddr_in& out) {
    std::memset(&out, 0, sizeof out);
    out.sin_family = AF_INET;
    out.sin_port = htons(port);
    return ::inet_pton(AF_INET, host.c_str(), &out.sin_addr) == 1;
}

bool is_multicast(const std::string& host) {
    in_addr addr{};
    if (::inet_pton(AF_INET, host.c_str(), &addr) != 1) return false;
    uint32_t a = ntohl(addr.s_addr);
    return (a >> 28) == 0xe;
}

} // namespace

Responder::Responder(ResponderConfig config, InteractionLog* log)
    : m_config(std::move(config)), m_log(log), m_rng(seeded_rng(m_config.rng_seed)) {}

Responder::~Responder() { stop(); }

void Responder::add_instance(const InstanceIdentity& instance) {
    std::lock_guard lock(m_instances_mutex);
    m_instances[instance.uuid] = instance;
}

void Responder::remove_instance(const std::string& uuid) {
    std::lock_guard lock(m_instances_mutex);
    m_instances.erase(uuid);
}

std::vector<InstanceIdentity> Responder::instances() const {
    std::lock_guard lock(m_instances_mutex);
    std::vector<InstanceIdentity> out;
    out.reserve(m_instances.size());
    for (const auto& [_, inst] : m_instances) out.push_back(inst);
    return out;
}

void Responder::start() {
    m_recv_fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (m_recv_fd < 0) throw Error(Errc::socket_bind_failure, "socket()");
    bool multicast_mode = m_config.join_multicast && is_multicast(m_config.group);
    if (multicast_mode) {
        // Multiple responders may share the standard group/port on one host.
        int one = 1;
        ::setsockopt(m_recv_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    }

    sockaddr_in addr{};
    if (!make_sockaddr(m_config.bind_address, m_config.port, addr)) {
        ::close(m_recv_fd);
        m_recv_fd = -1;
        throw Error(Errc::socket_bind_failure, "bad bind address " + m_config.bind_address);
    }
    if (::bind(m_recv_fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(m_recv_fd);
        m_recv_fd = -1;
        throw Error(Errc::socket_bind_failure,
                    m_config.bind_address + ":" + std::to_string(m_config.port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(m_recv_fd, reinterpret_cast<sockaddr*>(&addr), &len);
    m_port = ntohs(addr.sin_port);

    if (multicast_mode) {
        ip_mreq mreq{};
        ::inet_pton(AF_INET, m_config.group.c_str(), &mreq.imr_multiaddr);
        mreq.imr_interface.s_addr = htonl(INADDR_ANY);
        if (::setsockopt(m_recv_fd, IPPROTO_IP, IP_ADD_MEMBERSHIP, &mreq, sizeof mreq) != 0) {
            ::close(m_recv_fd);
            m_recv_fd = -1;
            throw Error(Errc::socket_bind_failure, "multicast join " + m_config.group);
        }
    }

    m_send_fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (m_send_fd < 0) {
        ::close(m_recv_fd);
        m_recv_fd = -1;
        throw Error(Errc::socket_bind_failure, "send socket()");
    }
    unsigned char ttl = 2;
    ::setsockopt(m_send_fd, IPPROTO_IP, IP_MULTICAST_TTL, &ttl, sizeof ttl);

    m_running = true;
    m_recv_thread = std::thread([this] { recv_loop(); });
    m_send_thread = std::thread([this] { sender_loop(); });

    if (m_config.advertise) {
        for (const auto& inst : instances()) send_burst(inst, AdvertisementKind::alive);
    }
}

void Responder::stop() {
    if (!m_running.exchange(false)) return;
    if (m_config.advertise) {
        for (const auto& inst : instances()) {
            try {
                send_burst(inst, AdvertisementKind::byebye);
            } catch (const Error&) {
                // best effort on shutdown
            }
        }
    }
    ::shutdown(m_recv_fd, SHUT_RDWR);
    ::close(m_recv_fd);
    m_recv_fd = -1;
    m_queue_cv.notify_all();
    if (m_recv_thread.joinable()) m_recv_thread.join();
    if (m_send_thread.joinable()) m_send_thread.join();
    ::close(m_send_fd);
    m_send_fd = -1;
}

void Responder::log_record(InteractionRecord record) {
    if (m_log) m_log->append(std::move(record));
}

void Responder::recv_loop() {
    char buf[65536];
    while (m_running) {
        sockaddr_in peer{};
        socklen_t len = sizeof peer;
        ssize_t n = ::recvfrom(m_recv_fd, buf, sizeof buf, 0,
                               reinterpret_cast<sockaddr*>(&peer), &len);
        if (n < 0) {
            if (!m_running) break;
            continue;
        }
        char ip[INET_ADDRSTRLEN] = {0};
        ::inet_ntop(AF_INET, &peer.sin_addr, ip, sizeof ip);
        handle_datagram(std::string(buf, static_cast<size_t>(n)), ip, ntohs(peer.sin_port));
    }
}

void Responder::handle_datagram(const std::string& payload, const std::string& peer_host,
                                uint16_t peer_port) {
    auto started = std::chrono::steady_clock::now();
    std::string peer = peer_host + ":" + std::to_string(peer_port);

    SearchRequest req;
    try {
        req = parse_search_request(payload);
    } catch (const Error& e) {
        // Our own advertisements also land on the multicast group; they are
        // not searches and get logged as rejected probes like any other noise.
        InteractionRecord rec;
        rec.timestamp = std::chrono::system_clock::now();
        rec.instance_uuid = "-";
        rec.layer = Layer::ssdp;
        rec.peer = peer;
        rec.summary = "datagram";
        rec.raw = payload;
        rec.status = std::string(to_string(e.code()));
        rec.outcome = Outcome::rejected;
        log_record(std::move(rec));
        return;
    }

    std::vector<InstanceIdentity> matched;
    {
        std::lock_guard lock(m_instances_mutex);
        for (const auto& [_, inst] : m_instances) {
            if (match_target(req.st, inst)) matched.push_back(inst);
        }
    }

    auto record_for = [&](const std::string& uuid, size_t responses) {
        InteractionRecord rec;
        rec.timestamp = std::chrono::system_clock::now();
        rec.instance_uuid = uuid;
        rec.layer = Layer::ssdp;
        rec.peer = peer;
        rec.summary = "M-SEARCH " + req.st;
        rec.raw = payload;
        rec.status = std::to_string(responses) + " responses";
        rec.latency = std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::steady_clock::now() - started);
        rec.outcome = Outcome::served;
        return rec;
    };

    if (matched.empty()) {
        log_record(record_for("-", 0));
        return;
    }
    for (const auto& inst : matched) {
        auto responses = build_responses(inst, req.st);
        for (const auto& res : responses) {
            std::chrono::milliseconds delay;
            if (m_config.delay_policy) {
                delay = m_config.delay_policy(req.mx);
            } else {
                std::lock_guard lock(m_rng_mutex);
                delay = default_search_delay(req.mx, m_rng);
            }
            enqueue_send(delay, serialize_search_response(res), peer_host, peer_port);
        }
        log_record(record_for(inst.uuid, responses.size()));
    }
}

void Responder::enqueue_send(std::chrono::milliseconds delay, std::string payload,
                             const std::string& host, uint16_t port) {
    {
        std::lock_guard lock(m_queue_mutex);
        m_queue.push(PendingSend{std::chrono::steady_clock::now() + delay,
                                 std::move(payload), host, port});
    }
    m_queue_cv.notify_one();
}

void Responder::sender_loop() {
    std::unique_lock lock(m_queue_mutex);
    while (m_running) {
        if (m_queue.empty()) {
            m_queue_cv.wait(lock, [this] { return !m_running || !m_queue.empty(); });
            continue;
        }
        auto next = m_queue.top().when;
        if (m_queue_cv.wait_until(lock, next, [this, next] {
                return !m_running || (!m_queue.empty() && m_queue.top().when < next);
            })) {
            if (!m_running) break;
            continue; // an earlier send arrived
        }
        PendingSend item = m_queue.top();
        m_queue.pop();
        lock.unlock();
        sockaddr_in dest{};
        if (make_sockaddr(item.dest_host, item.dest_port, dest)) {
            ::sendto(m_send_fd, item.payload.data(), item.payload.size(), 0,
                     reinterpret_cast<sockaddr*>(&dest), sizeof dest);
        }
        lock.lock();
    }
}

size_t Responder::send_advertisements(const std::string& uuid, AdvertisementKind kind) {
    InstanceIdentity inst;
    {
        std::lock_guard lock(m_instances_mutex);
        auto it = m_instances.find(uuid);
        if (it == m_instances.end())
            throw Error(Errc::socket_send_failure, "unknown instance " + uuid);
        inst = it->second;
    }
    return send_burst(inst, kind);
}

size_t Responder::send_burst(const InstanceIdentity& instance, AdvertisementKind kind) {
    if (m_send_fd < 0) throw Error(Errc::socket_send_failure, "responder not started");
    std::string dest_address =
        m_config.advertise_address.empty() ? m_config.group : m_config.advertise_address;
    uint16_t dest_port = m_config.advertise_port ? m_config.advertise_port
                         : m_config.port         ? m_config.port
                                                 : m_port;
    sockaddr_in dest{};
    if (!make_sockaddr(dest_address, dest_port, dest))
        throw Error(Errc::socket_send_failure, "bad advertise address " + dest_address);

    std::string host = dest_address + ":" + std::to_string(dest_port);
    size_t sent = 0;
    for (const auto& nt : notification_types(instance)) {
        Advertisement ad;
        ad.kind = kind;
        ad.host = host;
        ad.nt = nt;
        ad.usn = usn_for(instance, nt);
        if (kind == AdvertisementKind::alive) {
            ad.location = instance.location_url();
            ad.cache_control_max_age = k_max_age_seconds;
            ad.server = instance.server_header;
        }
        std::string payload = serialize_advertisement(ad);
        ssize_t n = ::sendto(m_send_fd, payload.data(), payload.size(), 0,
                             reinterpret_cast<sockaddr*>(&dest), sizeof dest);
        if (n < 0) throw Error(Errc::socket_send_failure, std::strerror(errno));
        ++sent;

        InteractionRecord rec;
        rec.timestamp = std::chrono::system_clock::now();
        rec.instance_uuid = instance.uuid;
        rec.layer = Layer::ssdp;
        rec.peer = host;
        rec.summary = std::string("NOTIFY ") +
                      (kind == AdvertisementKind::alive ? "ssdp:alive " : "ssdp:byebye ") + nt;
        rec.status = "sent";
        rec.outcome = Outcome::served;
        log_record(std::move(rec));
    }
    return sent;
}

} // namespace dupnp::ssdp
