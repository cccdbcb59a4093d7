#include "dupnp/http.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "dupnp/errors.hpp"
#include "dupnp/util.hpp"

namespace dupnp::http {

const std::string* find_header(const Headers& headers, std::string_view name) {
    for (const auto& h : headers) {
        if (iequals(h.name, name)) return &h.value;
    }
    return nullptr;
}

std::string header_or(const Headers& headers, std::string_view name, std::string_view fallback) {
    const std::string* v = find_header(headers, name);
    return v ? *v : std::string(fallback);
}

bool parse_header_lines(std::string_view block, Headers& out) {
    size_t pos = 0;
    while (pos < block.size()) {
        size_t eol = block.find("\r\n", pos);
        if (eol == std::string_view::npos) eol = block.size();
        std::string_view line = block.substr(pos, eol - pos);
        pos = eol == block.size() ? block.size() : eol + 2;
        if (line.empty()) continue;
        size_t colon = line.find(':');
        if (colon == std::string_view::npos) return false;
        out.push_back({trim(line.substr(0, colon)), trim(line.substr(colon + 1))});
    }
    return true;
}

std::string reason_for_status(int status) {
    switch (status) {
    case 200: return "OK";
    case 204: return "No Content";
    case 400: return "Bad Request";
    case 404: return "Not Found";
    case 405: return "Method Not Allowed";
    case 412: return "Precondition Failed";
    case 500: return "Internal Server Error";
    case 503: return "Service Unavailable";
    default: return "Unknown";
    }
}

static void append_headers_with_length(const Headers& headers, size_t body_size,
                                       std::string& out) {
    bool have_length = false;
    for (const auto& h : headers) {
        out += h.name;
        out += ": ";
        out += h.value;
        out += "\r\n";
        if (iequals(h.name, "Content-Length")) have_length = true;
    }
    if (!have_length && body_size > 0) {
        out += "Content-Length: " + std::to_string(body_size) + "\r\n";
    }
    out += "\r\n";
}

std::string serialize_request(const Request& req) {
    std::string out = req.method + " " + req.target + " " + req.version + "\r\n";
    append_headers_with_length(req.headers, req.body.size(), out);
    out += req.body;
    return out;
}

std::string serialize_response(const Response& res) {
    std::string out = "HTTP/1.1 " + std::to_string(res.status) + " " +
                      (res.reason.empty() ? reason_for_status(res.status) : res.reason) + "\r\n";
    // Responses always carry an explicit length so clients can frame them.
    bool have_length = find_header(res.headers, "Content-Length") != nullptr;
    for (const auto& h : res.headers) {
        out += h.name + ": " + h.value + "\r\n";
    }
    if (!have_length) out += "Content-Length: " + std::to_string(res.body.size()) + "\r\n";
    out += "\r\n";
    out += res.body;
    return out;
}

static size_t split_head(std::string_view bytes, std::string_view& start_line,
                         std::string_view& header_block) {
    size_t line_end = bytes.find("\r\n");
    if (line_end == std::string_view::npos)
        throw Error(Errc::malformed_start_line, "no CRLF after start line");
    start_line = bytes.substr(0, line_end);
    size_t head_end = bytes.find("\r\n\r\n", line_end);
    if (head_end == std::string_view::npos) {
        header_block = bytes.substr(line_end + 2);
        return bytes.size();
    }
    header_block = bytes.substr(line_end + 2, head_end - line_end - 2);
    return head_end + 4;
}

Request parse_request(std::string_view bytes) {
    std::string_view start_line, header_block;
    size_t body_at = split_head(bytes, start_line, header_block);
    Request req;
    auto parts = split(std::string(start_line), ' ');
    if (parts.size() < 3) throw Error(Errc::malformed_start_line, std::string(start_line));
    req.method = parts[0];
    req.target = parts[1];
    req.version = parts[2];
    if (!parse_header_lines(header_block, req.headers))
        throw Error(Errc::malformed_start_line, "bad header line");
    req.body = std::string(bytes.substr(body_at));
    return req;
}

Response parse_response(std::string_view bytes) {
    std::string_view start_line, header_block;
    size_t body_at = split_head(bytes, start_line, header_block);
    Response res;
    auto parts = split(std::string(start_line), ' ');
    if (parts.size() < 2 || parts[0].rfind("HTTP/", 0) != 0)
        throw Error(Errc::malformed_start_line, std::string(start_line));
    try {
        res.status = std::stoi(parts[1]);
    } catch (...) {
        throw Error(Errc::malformed_start_line, std::string(start_line));
    }
    res.reason = parts.size() > 2
                     ? std::string(start_line.substr(start_line.find(parts[2])))
                     : "";
    if (!parse_header_lines(header_block, res.headers))
        throw Error(Errc::malformed_start_line, "bad header line");
    res.body = std::string(bytes.substr(body_at));
    return res;
}

// ---------------------------------------------------------------------------
// Raw client exchange, used by GENA notification delivery.

static bool read_response_from_fd(int fd, bool expect_body, Response& out);

std::optional<Response> exchange_raw(const std::string& host, uint16_t port,
                                     std::string_view request_bytes, int timeout_ms) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return std::nullopt;

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        return std::nullopt;
    }
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    int nodelay = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &nodelay, sizeof nodelay);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        return std::nullopt;
    }
    size_t sent = 0;
    while (sent < request_bytes.size()) {
        ssize_t n = ::send(fd, request_bytes.data() + sent, request_bytes.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            ::close(fd);
            return std::nullopt;
        }
        sent += static_cast<size_t>(n);
    }
    // HEAD responses carry headers (including Content-Length) but no body.
    bool expect_body = request_bytes.rfind("HEAD ", 0) != 0;
    Response res;
    bool ok = read_response_from_fd(fd, expect_body, res);
    ::close(fd);
    if (!ok) return std::nullopt;
    return res;
}

static bool read_response_from_fd(int fd, bool expect_body, Response& out) {
    std::string buf;
    char chunk[4096];
    size_t head_end = std::string::npos;
    while (head_end == std::string::npos) {
        ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0) return false;
        buf.append(chunk, static_cast<size_t>(n));
        head_end = buf.find("\r\n\r\n");
        if (buf.size() > 1 << 20) return false;
    }
    Headers headers;
    size_t line_end = buf.find("\r\n");
    if (!parse_header_lines(std::string_view(buf).substr(line_end + 2, head_end - line_end - 2),
                            headers))
        return false;
    size_t want = 0;
    if (expect_body) {
        if (const std::string* cl = find_header(headers, "Content-Length")) {
            want = static_cast<size_t>(std::strtoul(cl->c_str(), nullptr, 10));
        }
    }
    while (buf.size() - head_end - 4 < want) {
        ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0) return false;
        buf.append(chunk, static_cast<size_t>(n));
    }
    try {
        out = parse_response(buf.substr(0, head_end + 4 + want));
    } catch (const Error&) {
        return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Server

Server::Server() = default;

Server::~Server() { stop(); }

bool Server::bind(const std::string& address, uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return false;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        return false;
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(fd, 64) != 0) {
        ::close(fd);
        return false;
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    m_listen_fd = fd;
    m_address = address;
    m_port = ntohs(addr.sin_port);
    return true;
}

void Server::start() {
    if (m_listen_fd < 0) throw Error(Errc::socket_bind_failure, "server not bound");
    m_running = true;
    m_accept_thread = std::thread([this] { accept_loop(); });
}

void Server::stop() {
    if (!m_running.exchange(false)) {
        if (m_listen_fd >= 0) {
            ::close(m_listen_fd);
            m_listen_fd = -1;
        }
        return;
    }
    ::shutdown(m_listen_fd, SHUT_RDWR);
    ::close(m_listen_fd);
    m_listen_fd = -1;
    {
        std::lock_guard lock(m_conn_mutex);
        for (int fd : m_conn_fds) ::shutdown(fd, SHUT_RDWR);
    }
    if (m_accept_thread.joinable()) m_accept_thread.join();
    std::unique_lock lock(m_conn_mutex);
    m_conn_cv.wait(lock, [this] { return m_active_conns == 0; });
}

void Server::accept_loop() {
    while (m_running) {
        sockaddr_in peer_addr{};
        socklen_t len = sizeof peer_addr;
        int fd = ::accept(m_listen_fd, reinterpret_cast<sockaddr*>(&peer_addr), &len);
        if (fd < 0) {
            if (!m_running) break;
            continue;
        }
        int nodelay = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &nodelay, sizeof nodelay);
        char ip[INET_ADDRSTRLEN] = {0};
        ::inet_ntop(AF_INET, &peer_addr.sin_addr, ip, sizeof ip);
        std::string peer = std::string(ip) + ":" + std::to_string(ntohs(peer_addr.sin_port));
        {
            std::lock_guard lock(m_conn_mutex);
            if (m_active_conns >= m_max_conns) {
                // Flood guard: shed the connection rather than spawn without
                // bound.
                ::close(fd);
                continue;
            }
            m_conn_fds.insert(fd);
            ++m_active_conns;
        }
        std::thread([this, fd, peer] { serve_connection(fd, peer); }).detach();
    }
}

static bool recv_with_timeout(int fd, std::string& buf, int timeout_ms,
                              const std::atomic<bool>& running) {
    // Sliced polling so connection threads notice a stopping server promptly
    // even when a peer goes quiet mid-request.
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (running && std::chrono::steady_clock::now() < deadline) {
        pollfd pfd{fd, POLLIN, 0};
        int r = ::poll(&pfd, 1, 250);
        if (r < 0) return false;
        if (r == 0) continue;
        char chunk[8192];
        ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0) return false;
        buf.append(chunk, static_cast<size_t>(n));
        return true;
    }
    return false;
}

void Server::serve_connection(int fd, std::string peer) {
    constexpr size_t k_max_head = 64 * 1024;
    constexpr size_t k_max_body = 8 * 1024 * 1024;
    constexpr int k_idle_ms = 10000;

    std::string buf;
    bool keep_alive = true;
    while (m_running && keep_alive) {
        // Head
        size_t head_end;
        while ((head_end = buf.find("\r\n\r\n")) == std::string::npos) {
            if (buf.size() > k_max_head || !recv_with_timeout(fd, buf, k_idle_ms, m_running))
                goto done;
        }

        {
            Request req;
            bool parsed = true;
            try {
                req = parse_request(std::string_view(buf).substr(0, head_end + 4));
            } catch (const Error&) {
                parsed = false;
            }

            size_t body_len = 0;
            if (parsed) {
                if (const std::string* cl = req.header("Content-Length")) {
                    body_len = static_cast<size_t>(std::strtoul(cl->c_str(), nullptr, 10));
                    if (body_len > k_max_body) parsed = false;
                }
            }
            if (!parsed) {
                if (m_malformed) m_malformed(peer, buf.substr(0, std::min(buf.size(), m_raw_cap)));
                Response bad;
                bad.status = 400;
                bad.reason = reason_for_status(400);
                std::string out = serialize_response(bad);
                ::send(fd, out.data(), out.size(), MSG_NOSIGNAL);
                goto done;
            }

            while (buf.size() < head_end + 4 + body_len) {
                if (!recv_with_timeout(fd, buf, k_idle_ms, m_running)) goto done;
            }
            req.body = buf.substr(head_end + 4, body_len);
            req.peer = peer;
            req.raw_head = buf.substr(0, std::min(head_end + 4 + body_len, m_raw_cap));
            std::string conn = to_lower(req.header_or("Connection"));
            keep_alive = !(conn == "close" || (req.version == "HTTP/1.0" && conn != "keep-alive"));
            buf.erase(0, head_end + 4 + body_len);

            Response res;
            if (m_handler) {
                try {
                    res = m_handler(req);
                } catch (...) {
                    res = Response{};
                    res.status = 500;
                    res.reason = reason_for_status(500);
                }
            } else {
                res.status = 404;
                res.reason = reason_for_status(404);
            }

            bool head_request = iequals(req.method, "HEAD");
            std::string out;
            if (head_request) {
                // Same headers as GET, body suppressed.
                Response head_res = res;
                std::string body;
                body.swap(head_res.body);
                if (!find_header(head_res.headers, "Content-Length"))
                    head_res.set_header("Content-Length", std::to_string(body.size()));
                out = serialize_response(head_res);
            } else {
                out = serialize_response(res);
            }
            size_t sent = 0;
            while (sent < out.size()) {
                ssize_t n = ::send(fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
                if (n <= 0) goto done;
                sent += static_cast<size_t>(n);
            }
        }
    }
done:
    ::close(fd);
    {
        std::lock_guard lock(m_conn_mutex);
        m_conn_fds.erase(fd);
        --m_active_conns;
    }
    m_conn_cv.notify_all();
}

} // namespace dupnp::http
