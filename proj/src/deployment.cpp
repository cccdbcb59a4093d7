#include "dupnp/deployment.hpp"

#include <arpa/inet.h>

#include <set>

#include "dupnp/errors.hpp"
#include "dupnp/util.hpp"

namespace dupnp {

bool is_multicast_address(const std::string& address) {
    in_addr addr{};
    if (::inet_pton(AF_INET, address.c_str(), &addr) != 1) return false;
    return (ntohl(addr.s_addr) >> 28) == 0xe;
}

Deployment::Deployment(DeploymentConfig config, std::filesystem::path base_dir)
    : m_config(std::move(config)), m_base_dir(std::move(base_dir)) {}

Deployment::~Deployment() { stop(); }

void Deployment::start() {
    LogConfig log_config;
    log_config.sink_path = m_config.log.sink_path;
    log_config.raw_capture_cap = m_config.log.raw_capture_cap;
    m_log = std::make_unique<InteractionLog>(log_config);

    ssdp::ResponderConfig responder_config;
    responder_config.bind_address = m_config.ssdp.bind_address;
    responder_config.port = m_config.ssdp.port;
    responder_config.group = m_config.ssdp.address;
    responder_config.join_multicast = is_multicast_address(m_config.ssdp.address);
    responder_config.advertise = m_config.ssdp.advertise;
    m_responder = std::make_unique<ssdp::Responder>(responder_config, m_log.get());

    auto rng = seeded_rng(0);
    std::set<std::string> used_uuids;
    for (const auto& entry : m_config.instances) {
        std::filesystem::path bundle_path = entry.bundle_path;
        if (bundle_path.is_relative()) bundle_path = m_base_dir / bundle_path;
        DeviceBundle bundle = load_bundle(bundle_path);

        InstanceConfig instance_config;
        instance_config.bind_address = entry.bind_address;
        instance_config.http_port = entry.http_port;
        instance_config.uuid_policy = entry.uuid_policy;
        instance_config.response_delay = std::chrono::milliseconds(entry.response_delay_ms);
        instance_config.bundle_dir = bundle_path;
        if (entry.uuid_policy == UuidPolicy::randomize) {
            std::string uuid;
            do {
                uuid = "uuid:" + random_uuid(rng);
            } while (!used_uuids.insert(uuid).second);
            instance_config.uuid_override = uuid;
        } else if (!used_uuids.insert(bundle.manifest.uuid).second) {
            throw Error(Errc::config_invalid,
                        "duplicate instance uuid " + bundle.manifest.uuid +
                            " (use uuid_policy \"randomize\")");
        }
        instance_config.responder = m_responder.get();
        m_instances.push_back(
            Instance::instantiate(std::move(bundle), std::move(instance_config), *m_log));
    }

    m_responder->start();
    m_running = true;

    if (m_config.checkpoint_interval_seconds > 0) {
        m_checkpoint_thread = std::thread([this] {
            std::unique_lock lock(m_stop_mutex);
            auto interval = std::chrono::seconds(m_config.checkpoint_interval_seconds);
            while (m_running) {
                if (m_stop_cv.wait_for(lock, interval, [this] { return !m_running.load(); }))
                    break;
                lock.unlock();
                checkpoint_all();
                lock.lock();
            }
        });
    }
}

void Deployment::stop() {
    if (!m_running.exchange(false)) {
        m_instances.clear();
        m_responder.reset();
        m_log.reset();
        return;
    }
    m_stop_cv.notify_all();
    if (m_checkpoint_thread.joinable()) m_checkpoint_thread.join();
    if (m_responder) m_responder->stop(); // byebye burst when advertising
    checkpoint_all();
    m_instances.clear();
    m_responder.reset();
    if (m_log) m_log->flush();
    m_log.reset();
}

void Deployment::checkpoint_all() {
    for (auto& instance : m_instances) instance->checkpoint();
}

std::vector<Instance*> Deployment::instances() {
    std::vector<Instance*> out;
    out.reserve(m_instances.size());
    for (auto& i : m_instances) out.push_back(i.get());
    return out;
}

} // namespace dupnp
