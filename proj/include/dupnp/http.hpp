#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace dupnp::http {

struct Header {
    std::string name;
    std::string value;
    bool operator==(const Header&) const = default;
};

using Headers = std::vector<Header>;

// Case-insensitive lookup of the first matching header.
const std::string* find_header(const Headers& headers, std::string_view name);
std::string header_or(const Headers& headers, std::string_view name, std::string_view fallback);

// Parses "NAME: value" lines from `block` (no start line). Returns false on
// a line without a colon.
bool parse_header_lines(std::string_view block, Headers& out);

struct Request {
    std::string method;
    std::string target;
    std::string version = "HTTP/1.1";
    Headers headers;
    std::string body;

    std::string peer;     // "ip:port", filled by the server
    std::string raw_head; // request line + headers as received, capped

    const std::string* header(std::string_view name) const { return find_header(headers, name); }
    std::string header_or(std::string_view name, std::string_view fallback = "") const {
        return http::header_or(headers, name, fallback);
    }
    void set_header(std::string_view name, std::string_view value) {
        headers.push_back({std::string(name), std::string(value)});
    }
};

struct Response {
    int status = 200;
    std::string reason = "OK";
    Headers headers;
    std::string body;

    const std::string* header(std::string_view name) const { return find_header(headers, name); }
    std::string header_or(std::string_view name, std::string_view fallback = "") const {
        return http::header_or(headers, name, fallback);
    }
    void set_header(std::string_view name, std::string_view value) {
        headers.push_back({std::string(name), std::string(value)});
    }
};

// Full-message codecs (start line + headers + body). serialize_* add a
// Content-Length header when one is not already present.
std::string serialize_request(const Request& req);
std::string serialize_response(const Response& res);
Request parse_request(std::string_view bytes);   // throws Error{malformed_start_line,...}
Response parse_response(std::string_view bytes); // throws

std::string reason_for_status(int status);

// Opens a TCP connection, writes `request_bytes`, reads one response.
// Returns nullopt on connect/send/read failure.
std::optional<Response> exchange_raw(const std::string& host, uint16_t port,
                                     std::string_view request_bytes,
                                     int timeout_ms = 5000);

// Minimal threaded HTTP/1.1 server. Unlike off-the-shelf servers it routes
// any method token, which GENA's SUBSCRIBE/UNSUBSCRIBE require, and hands
// the handler the raw request bytes for telemetry capture.
class Server {
public:
    using Handler = std::function<Response(const Request&)>;
    // Called when a connection sends bytes that do not parse as HTTP.
    using MalformedHandler = std::function<void(const std::string& peer, const std::string& raw)>;

    Server();
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    void set_handler(Handler handler) { m_handler = std::move(handler); }
    void set_malformed_handler(MalformedHandler handler) { m_malformed = std::move(handler); }
    void set_raw_capture_cap(size_t cap) { m_raw_cap = cap; }
    void set_max_connections(size_t cap) { m_max_conns = cap; }

    // Returns false when the address/port cannot be bound. Port 0 picks an
    // ephemeral port, readable via port() afterwards.
    bool bind(const std::string& address, uint16_t port);
    void start();
    void stop();

    const std::string& address() const { return m_address; }
    uint16_t port() const { return m_port; }
    bool running() const { return m_running.load(); }

private:
    void accept_loop();
    void serve_connection(int fd, std::string peer);

    Handler m_handler;
    MalformedHandler m_malformed;
    size_t m_raw_cap = 4096;
    size_t m_max_conns = 256;

    std::string m_address;
    uint16_t m_port = 0;
    int m_listen_fd = -1;
    std::atomic<bool> m_running{false};
    std::thread m_accept_thread;

    std::mutex m_conn_mutex;
    std::condition_variable m_conn_cv;
    std::set<int> m_conn_fds;
    size_t m_active_conns = 0;
};

} // namespace dupnp::http
