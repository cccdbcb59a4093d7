#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dupnp/http.hpp"
#include "dupnp/identity.hpp"
#include "dupnp/interaction.hpp"

namespace dupnp::ssdp {

inline constexpr const char* k_default_group = "239.255.255.250";
inline constexpr uint16_t k_default_port = 1900;
inline constexpr int k_mx_cap_seconds = 5;
inline constexpr int k_max_age_seconds = 1800;
inline constexpr const char* k_man_discover = "\"ssdp:discover\"";

struct SearchRequest {
    std::string host;                  // "239.255.255.250:1900"
    std::string man = k_man_discover;  // always the quoted literal after parsing
    int mx = 1;                        // clamped into [1, 5]
    std::string st;
    std::optional<std::string> user_agent;
    http::Headers extra_headers; // unknown headers, preserved but ignored

    bool operator==(const SearchRequest&) const = default;
};

struct SearchResponse {
    std::string location;
    int cache_control_max_age = k_max_age_seconds;
    std::string server;
    std::string usn;
    std::string st;

    bool operator==(const SearchResponse&) const = default;
};

enum class AdvertisementKind { alive, byebye };

struct Advertisement {
    AdvertisementKind kind = AdvertisementKind::alive;
    std::string host; // multicast group "addr:port"
    std::string nt;
    std::string usn;
    std::string location;                        // alive only
    int cache_control_max_age = k_max_age_seconds; // alive only
    std::string server;                            // alive only

    bool operator==(const Advertisement&) const = default;
};

// Wire codecs. Parsers throw Error{malformed_start_line | missing_header |
// bad_man_value}; header names match case-insensitively.
SearchRequest parse_search_request(std::string_view datagram);
std::string serialize_search_request(const SearchRequest& req);
SearchResponse parse_search_response(std::string_view datagram);
std::string serialize_search_response(const SearchResponse& res);
Advertisement parse_advertisement(std::string_view datagram);
std::string serialize_advertisement(const Advertisement& ad);

// True iff st is ssdp:all, upnp:rootdevice, the instance uuid, or one of the
// instance's device or service types.
bool match_target(std::string_view st, const InstanceIdentity& instance);

// Notification types an instance answers for / advertises:
// upnp:rootdevice, uuid:<uuid>, each device type, each service type.
std::vector<std::string> notification_types(const InstanceIdentity& instance);
std::string usn_for(const InstanceIdentity& instance, std::string_view nt);

// One response for a concrete search target (pre: match_target holds).
SearchResponse build_search_response(const InstanceIdentity& instance, std::string_view st);
// All responses owed for a target; ssdp:all yields 2 + D + S of them.
std::vector<SearchResponse> build_responses(const InstanceIdentity& instance,
                                            std::string_view st);

// Uniform delay in [0, min(mx,5)] seconds, shaved slightly below the cap so
// responses arrive inside the requester's MX window.
std::chrono::milliseconds default_search_delay(int mx, std::mt19937_64& rng);

struct ResponderConfig {
    std::string bind_address = "0.0.0.0";
    uint16_t port = k_default_port;
    std::string group = k_default_group;
    bool join_multicast = true; // off for loopback/unicast test runs
    bool advertise = false;     // unsolicited alive/byebye bursts
    std::string advertise_address; // empty: the group address
    uint16_t advertise_port = 0;   // 0: the (resolved) bind port
    uint64_t rng_seed = 0;      // 0: system entropy
    // Test hook: overrides the default delay policy when set.
    std::function<std::chrono::milliseconds(int mx)> delay_policy;
};

// One shared listener multiplexing every deployed instance. Each matching
// instance answers a search with unicast responses after a randomized delay.
class Responder {
public:
    Responder(ResponderConfig config, InteractionLog* log);
    ~Responder();
    Responder(const Responder&) = delete;
    Responder& operator=(const Responder&) = delete;

    void add_instance(const InstanceIdentity& instance);
    void remove_instance(const std::string& uuid);
    std::vector<InstanceIdentity> instances() const;

    void start(); // throws Error{socket_bind_failure}
    void stop();  // sends byebye for all instances when advertising

    uint16_t port() const { return m_port; }

    // Sends one alive/byebye burst for the given instance; returns the
    // number of datagrams sent. Throws Error{socket_send_failure}.
    size_t send_advertisements(const std::string& uuid, AdvertisementKind kind);

private:
    struct PendingSend {
        std::chrono::steady_clock::time_point when;
        std::string payload;
        std::string dest_host;
        uint16_t dest_port;
        bool operator>(const PendingSend& other) const { return when > other.when; }
    };

    void recv_loop();
    void sender_loop();
    void handle_datagram(const std::string& payload, const std::string& peer_host,
                         uint16_t peer_port);
    void enqueue_send(std::chrono::milliseconds delay, std::string payload,
                      const std::string& host, uint16_t port);
    size_t send_burst(const InstanceIdentity& instance, AdvertisementKind kind);
    void log_record(InteractionRecord record);

    ResponderConfig m_config;
    InteractionLog* m_log;
    std::mt19937_64 m_rng;
    std::mutex m_rng_mutex;

    int m_recv_fd = -1;
    int m_send_fd = -1;
    uint16_t m_port = 0;
    std::atomic<bool> m_running{false};
    std::thread m_recv_thread;
    std::thread m_send_thread;

    mutable std::mutex m_instances_mutex;
    std::map<std::string, InstanceIdentity> m_instances; // keyed by uuid

    std::mutex m_queue_mutex;
    std::condition_variable m_queue_cv;
    std::priority_queue<PendingSend, std::vector<PendingSend>, std::greater<>> m_queue;
};

} // namespace dupnp::ssdp
