#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "dupnp/http.hpp"

namespace dupnp::gena {

inline constexpr const char* k_event_ns = "urn:schemas-upnp-org:event-1-0";
inline constexpr int k_default_timeout_seconds = 1800;

struct Change {
    std::string variable_name;
    std::string new_value;
    bool operator==(const Change&) const = default;
};

struct EventPropertySet {
    std::vector<Change> changes;
    bool operator==(const EventPropertySet&) const = default;
};

struct Subscription {
    std::string sid; // "uuid:"-prefixed
    std::vector<std::string> callback_urls;
    int timeout_seconds = k_default_timeout_seconds;
    uint32_t seq = 0; // next sequence number to send; initial event is 0
    std::string service_id;
    std::chrono::steady_clock::time_point expires_at{};
};

std::string build_property_set(const EventPropertySet& set);
EventPropertySet parse_property_set(std::string_view xml_bytes); // throws Error{not_soap}

struct NotifyMessage {
    std::string sid;
    uint32_t seq = 0;
    EventPropertySet changes;
    bool operator==(const NotifyMessage&) const = default;
};

// Builds the NOTIFY request bytes for one callback URL.
std::string build_notify(const Subscription& sub, uint32_t seq, const EventPropertySet& changes,
                         const std::string& callback_url);
NotifyMessage parse_notify(std::string_view request_bytes); // throws

// SUBSCRIBE/UNSUBSCRIBE decoding. Renewals carry SID and no CALLBACK.
struct SubscribeRequest {
    bool unsubscribe = false;
    bool renewal = false;
    std::string sid;                        // renewal/unsubscribe
    std::vector<std::string> callback_urls; // new subscription
    int timeout_seconds = k_default_timeout_seconds;
};

// Throws Error{missing_callback} when a new subscription has no usable
// CALLBACK or the NT header is not upnp:event.
SubscribeRequest parse_subscribe_request(const http::Request& request);

// Splits "<http://host:port/path>" into host, port, path.
struct CallbackEndpoint {
    std::string host;
    uint16_t port = 80;
    std::string path = "/";
};
std::optional<CallbackEndpoint> parse_callback_url(std::string_view url);

// Per-instance subscription table plus ordered NOTIFY delivery. Sends run on
// a dedicated thread so control requests never wait on slow subscribers;
// delivery per change is at-most-once with a single retry on connect failure.
class SubscriptionManager {
public:
    explicit SubscriptionManager(std::function<std::string()> sid_factory = {});
    ~SubscriptionManager();
    SubscriptionManager(const SubscriptionManager&) = delete;
    SubscriptionManager& operator=(const SubscriptionManager&) = delete;

    // Returns the accepted subscription (by value). Queues the initial
    // seq-0 NOTIFY carrying `initial_state`. Throws Error{missing_callback}.
    Subscription subscribe(const std::string& service_id,
                           const std::vector<std::string>& callback_urls, int timeout_seconds,
                           const EventPropertySet& initial_state);
    // Throws Error{unknown_sid} for absent or expired subscriptions.
    Subscription renew(const std::string& sid, int timeout_seconds);
    void unsubscribe(const std::string& sid); // throws Error{unknown_sid}

    // Queues one NOTIFY per live subscriber of the service, assigning each
    // subscriber's next seq at enqueue time so write order is preserved.
    void publish(const std::string& service_id, const EventPropertySet& changes);

    std::vector<Subscription> subscriptions() const;
    void drain(); // waits until the send queue is empty (tests, shutdown)

    uint64_t delivered() const { return m_delivered.load(); }
    uint64_t failed() const { return m_failed.load(); }

    // Test hook: replaces socket delivery.
    using SendHook = std::function<bool(const std::string& callback_url,
                                        const std::string& request_bytes)>;
    void set_send_hook(SendHook hook);

private:
    struct Job {
        std::vector<std::pair<std::string, std::string>> attempts; // (url, payload)
    };

    void sender_loop();
    void sweep_expired_locked();
    void enqueue_locked(Subscription& sub, const EventPropertySet& changes);

    std::function<std::string()> m_sid_factory;
    mutable std::mutex m_mutex;
    std::vector<Subscription> m_subs;
    std::deque<Job> m_jobs;
    std::condition_variable m_cv;
    bool m_stopping = false;
    size_t m_in_flight = 0;
    std::atomic<uint64_t> m_delivered{0};
    std::atomic<uint64_t> m_failed{0};
    SendHook m_send_hook;
    std::thread m_sender;
};

} // namespace dupnp::gena
