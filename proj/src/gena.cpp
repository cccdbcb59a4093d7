#include "dupnp/gena.hpp"

#include <algorithm>

#include "dupnp/errors.hpp"
#include "dupnp/util.hpp"
#include "dupnp/xml.hpp"

namespace dupnp::gena {

std::string build_property_set(const EventPropertySet& set) {
    std::string out = "<?xml version=\"1.0\"?>\n<e:propertyset xmlns:e=\"";
    out += k_event_ns;
    out += "\">\n";
    for (const auto& change : set.changes) {
        out += "<e:property>\n<" + change.variable_name + ">" +
               xml::escape(change.new_value) + "</" + change.variable_name +
               ">\n</e:property>\n";
    }
    out += "</e:propertyset>\n";
    return out;
}

EventPropertySet parse_property_set(std::string_view xml_bytes) {
    xml::Element root;
    try {
        root = xml::parse(xml_bytes);
    } catch (const Error&) {
        throw Error(Errc::not_soap, "property set is not well-formed XML");
    }
    if (root.local_name() != "propertyset")
        throw Error(Errc::not_soap, "expected propertyset, got " + root.name);
    EventPropertySet set;
    for (const auto& property : root.children) {
        if (property.local_name() != "property") continue;
        for (const auto& var : property.children) {
            set.changes.push_back({std::string(var.local_name()), var.text});
        }
    }
    return set;
}

std::string build_notify(const Subscription& sub, uint32_t seq, const EventPropertySet& changes,
                         const std::string& callback_url) {
    auto endpoint = parse_callback_url(callback_url);
    std::string host = endpoint ? endpoint->host + ":" + std::to_string(endpoint->port)
                                : callback_url;
    std::string path = endpoint ? endpoint->path : "/";

    http::Request req;
    req.method = "NOTIFY";
    req.target = path;
    req.set_header("HOST", host);
    req.set_header("CONTENT-TYPE", "text/xml; charset=\"utf-8\"");
    req.set_header("NT", "upnp:event");
    req.set_header("NTS", "upnp:propchange");
    req.set_header("SID", sub.sid);
    req.set_header("SEQ", std::to_string(seq));
    req.body = build_property_set(changes);
    return http::serialize_request(req);
}

NotifyMessage parse_notify(std::string_view request_bytes) {
    http::Request req = http::parse_request(request_bytes);
    if (!iequals(req.method, "NOTIFY"))
        throw Error(Errc::malformed_start_line, "expected NOTIFY, got " + req.method);
    NotifyMessage msg;
    const std::string* sid = req.header("SID");
    if (!sid) throw Error(Errc::missing_header, "SID");
    msg.sid = *sid;
    const std::string* seq = req.header("SEQ");
    if (!seq) throw Error(Errc::missing_header, "SEQ");
    try {
        msg.seq = static_cast<uint32_t>(std::stoul(*seq));
    } catch (...) {
        throw Error(Errc::missing_header, "SEQ");
    }
    msg.changes = parse_property_set(req.body);
    return msg;
}

std::optional<CallbackEndpoint> parse_callback_url(std::string_view url) {
    std::string_view v = url;
    if (v.rfind("http://", 0) != 0) return std::nullopt;
    v.remove_prefix(7);
    size_t slash = v.find('/');
    std::string_view authority = slash == std::string_view::npos ? v : v.substr(0, slash);
    CallbackEndpoint ep;
    ep.path = slash == std::string_view::npos ? "/" : std::string(v.substr(slash));
    size_t colon = authority.rfind(':');
    if (colon == std::string_view::npos) {
        ep.host = std::string(authority);
        ep.port = 80;
    } else {
        ep.host = std::string(authority.substr(0, colon));
        try {
            ep.port = static_cast<uint16_t>(std::stoi(std::string(authority.substr(colon + 1))));
        } catch (...) {
            return std::nullopt;
        }
    }
    if (ep.host.empty()) return std::nullopt;
    return ep;
}

SubscribeRequest parse_subscribe_request(const http::Request& request) {
    SubscribeRequest out;
    if (iequals(request.method, "UNSUBSCRIBE")) {
        out.unsubscribe = true;
        const std::string* sid = request.header("SID");
        if (!sid) throw Error(Errc::unknown_sid, "UNSUBSCRIBE without SID");
        out.sid = *sid;
        return out;
    }
    if (!iequals(request.method, "SUBSCRIBE"))
        throw Error(Errc::malformed_start_line, request.method);

    if (const std::string* sid = request.header("SID")) {
        // Renewal: SID must come alone, without CALLBACK/NT.
        out.renewal = true;
        out.sid = *sid;
    } else {
        const std::string* nt = request.header("NT");
        if (!nt || *nt != "upnp:event")
            throw Error(Errc::missing_callback, "NT must be upnp:event");
        const std::string* callback = request.header("CALLBACK");
        if (!callback) throw Error(Errc::missing_callback, "no CALLBACK header");
        // CALLBACK: <url1><url2>...
        std::string_view v = *callback;
        while (true) {
            size_t open = v.find('<');
            if (open == std::string_view::npos) break;
            size_t close = v.find('>', open);
            if (close == std::string_view::npos) break;
            std::string url = trim(v.substr(open + 1, close - open - 1));
            if (parse_callback_url(url)) out.callback_urls.push_back(std::move(url));
            v.remove_prefix(close + 1);
        }
        if (out.callback_urls.empty())
            throw Error(Errc::missing_callback, "no usable callback URL in " + *callback);
    }

    out.timeout_seconds = k_default_timeout_seconds;
    if (const std::string* timeout = request.header("TIMEOUT")) {
        // "Second-1800" or "infinite"; infinity is capped to the default.
        std::string t = to_lower(*timeout);
        if (t.rfind("second-", 0) == 0) {
            try {
                int secs = std::stoi(t.substr(7));
                if (secs > 0) out.timeout_seconds = std::min(secs, k_default_timeout_seconds);
            } catch (...) {
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// SubscriptionManager

SubscriptionManager::SubscriptionManager(std::function<std::string()> sid_factory)
    : m_sid_factory(std::move(sid_factory)) {
    if (!m_sid_factory) {
        m_sid_factory = [rng = seeded_rng(0)]() mutable { return "uuid:" + random_uuid(rng); };
    }
    m_sender = std::thread([this] { sender_loop(); });
}

SubscriptionManager::~SubscriptionManager() {
    {
        std::lock_guard lock(m_mutex);
        m_stopping = true;
    }
    m_cv.notify_all();
    if (m_sender.joinable()) m_sender.join();
}

void SubscriptionManager::set_send_hook(SendHook hook) {
    std::lock_guard lock(m_mutex);
    m_send_hook = std::move(hook);
}

void SubscriptionManager::sweep_expired_locked() {
    auto now = std::chrono::steady_clock::now();
    std::erase_if(m_subs, [now](const Subscription& s) { return s.expires_at <= now; });
}

void SubscriptionManager::enqueue_locked(Subscription& sub, const EventPropertySet& changes) {
    uint32_t seq = sub.seq++;
    Job job;
    for (const auto& url : sub.callback_urls) {
        job.attempts.push_back({url, build_notify(sub, seq, changes, url)});
    }
    m_jobs.push_back(std::move(job));
}

Subscription SubscriptionManager::subscribe(const std::string& service_id,
                                            const std::vector<std::string>& callback_urls,
                                            int timeout_seconds,
                                            const EventPropertySet& initial_state) {
    if (callback_urls.empty()) throw Error(Errc::missing_callback, "no callback URLs");
    Subscription sub;
    sub.sid = m_sid_factory();
    sub.callback_urls = callback_urls;
    sub.timeout_seconds = timeout_seconds;
    sub.service_id = service_id;
    sub.seq = 0;
    sub.expires_at = std::chrono::steady_clock::now() + std::chrono::seconds(timeout_seconds);
    Subscription out;
    {
        std::lock_guard lock(m_mutex);
        sweep_expired_locked();
        m_subs.push_back(sub);
        // Initial event: seq 0, all evented variables' current values.
        enqueue_locked(m_subs.back(), initial_state);
        out = m_subs.back();
    }
    m_cv.notify_all();
    return out;
}

Subscription SubscriptionManager::renew(const std::string& sid, int timeout_seconds) {
    std::lock_guard lock(m_mutex);
    sweep_expired_locked();
    for (auto& sub : m_subs) {
        if (sub.sid == sid) {
            sub.timeout_seconds = timeout_seconds;
            sub.expires_at =
                std::chrono::steady_clock::now() + std::chrono::seconds(timeout_seconds);
            return sub;
        }
    }
    throw Error(Errc::unknown_sid, sid);
}

void SubscriptionManager::unsubscribe(const std::string& sid) {
    std::lock_guard lock(m_mutex);
    sweep_expired_locked();
    auto it = std::find_if(m_subs.begin(), m_subs.end(),
                           [&](const Subscription& s) { return s.sid == sid; });
    if (it == m_subs.end()) throw Error(Errc::unknown_sid, sid);
    m_subs.erase(it);
}

void SubscriptionManager::publish(const std::string& service_id,
                                  const EventPropertySet& changes) {
    if (changes.changes.empty()) return;
    {
        std::lock_guard lock(m_mutex);
        sweep_expired_locked();
        for (auto& sub : m_subs) {
            if (sub.service_id == service_id) enqueue_locked(sub, changes);
        }
    }
    m_cv.notify_all();
}

std::vector<Subscription> SubscriptionManager::subscriptions() const {
    std::lock_guard lock(m_mutex);
    return m_subs;
}

void SubscriptionManager::drain() {
    std::unique_lock lock(m_mutex);
    m_cv.wait(lock, [this] { return m_jobs.empty() && m_in_flight == 0; });
}

void SubscriptionManager::sender_loop() {
    std::unique_lock lock(m_mutex);
    while (true) {
        // Idle wakeups double as the periodic expiry sweep.
        m_cv.wait_for(lock, std::chrono::seconds(1),
                      [this] { return m_stopping || !m_jobs.empty(); });
        if (m_jobs.empty()) {
            if (m_stopping) break;
            sweep_expired_locked();
            continue;
        }
        Job job = std::move(m_jobs.front());
        m_jobs.pop_front();
        m_in_flight = 1;
        SendHook hook = m_send_hook;
        lock.unlock();

        // Callback URLs are alternates: first one that accepts wins. Each
        // gets one retry on connection failure; a dead subscriber must not
        // stall the queue beyond that.
        bool ok = false;
        for (const auto& [url, payload] : job.attempts) {
            if (hook) {
                ok = hook(url, payload);
            } else if (auto ep = parse_callback_url(url)) {
                for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
                    auto res = http::exchange_raw(ep->host, ep->port, payload, 2000);
                    ok = res.has_value();
                }
            }
            if (ok) break;
        }
        (ok ? m_delivered : m_failed).fetch_add(1);

        lock.lock();
        m_in_flight = 0;
        m_cv.notify_all();
    }
}

} // namespace dupnp::gena
