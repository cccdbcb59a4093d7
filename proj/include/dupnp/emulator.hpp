#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dupnp/bundle.hpp"
#include "dupnp/gena.hpp"
#include "dupnp/http.hpp"
#include "dupnp/identity.hpp"
#include "dupnp/interaction.hpp"
#include "dupnp/soap.hpp"
#include "dupnp/ssdp.hpp"

namespace dupnp {

// Live values of every declared state variable, validated on write against
// the variable's definition. Keys are "<service key>/<variable name>".
class StateStore {
public:
    void init(const DeviceBundle& bundle); // throws Error{bundle_invalid}

    std::optional<std::string> get(const std::string& key) const;
    // Validates and stores; returns false (store untouched) on violation.
    bool try_set(const std::string& key, const std::string& value);

    std::map<std::string, std::string> snapshot() const;
    // True when every stored value still validates (fuzz-test support).
    bool all_valid() const;

private:
    struct Entry {
        std::string value;
        const desc::StateVariableDef* def = nullptr;
    };
    mutable std::shared_mutex m_mutex;
    std::map<std::string, Entry> m_entries;

    friend class Instance;
};

enum class UuidPolicy { preserve, randomize };

struct InstanceConfig {
    std::string bind_address = "127.0.0.1";
    uint16_t http_port = 0; // 0: ephemeral
    UuidPolicy uuid_policy = UuidPolicy::preserve;
    std::optional<std::string> uuid_override;        // wins over uuid_policy
    std::optional<std::filesystem::path> bundle_dir; // enables checkpointing
    std::chrono::milliseconds response_delay{0};     // optional latency padding
    ssdp::Responder* responder = nullptr;            // registered when given
};

// One running honeypot instance: description/presentation hosting, SOAP
// control against the state store, GENA eventing, full interaction logging.
class Instance {
public:
    // Binds, starts serving, registers with the SSDP responder when one is
    // configured. Throws Error{port_in_use} and Error{bundle_invalid}.
    static std::unique_ptr<Instance> instantiate(DeviceBundle bundle, InstanceConfig config,
                                                 InteractionLog& log);
    ~Instance();
    Instance(const Instance&) = delete;
    Instance& operator=(const Instance&) = delete;

    void stop();

    const InstanceIdentity& identity() const { return m_identity; }
    const DeviceBundle& bundle() const { return m_bundle; }
    uint16_t port() const { return m_server.port(); }
    StateStore& state() { return m_store; }
    const StateStore& state() const { return m_store; }
    gena::SubscriptionManager& subscriptions() { return m_subscriptions; }

    // Control dispatch against the state store. Read actions report current
    // values; write actions validate then store, and each successful write
    // to an evented variable is published to the service's subscribers.
    soap::ActionResult dispatch_action(const soap::ActionInvocation& inv,
                                       const CuratedService& service);

    // Writes the current store back to the bundle directory's snapshot.
    void checkpoint();

private:
    Instance(DeviceBundle bundle, InstanceConfig config, InteractionLog& log);

    http::Response handle_request(const http::Request& req);
    http::Response serve_document(const StoredDocument& doc);
    http::Response handle_control(const CuratedService& svc, const http::Request& req,
                                  Outcome& outcome, std::string& status);
    http::Response handle_eventing(const CuratedService& svc, const http::Request& req,
                                   Outcome& outcome, std::string& status);
    gena::EventPropertySet evented_state(const CuratedService& svc) const;
    void log_interaction(const http::Request& req, Layer layer, Outcome outcome,
                         const std::string& status,
                         std::chrono::steady_clock::time_point started);

    DeviceBundle m_bundle;
    InstanceConfig m_config;
    InteractionLog& m_log;
    InstanceIdentity m_identity;
    StateStore m_store;
    gena::SubscriptionManager m_subscriptions;
    http::Server m_server;
    bool m_stopped = false;
};

} // namespace dupnp
