#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "dupnp/config.hpp"
#include "dupnp/emulator.hpp"
#include "dupnp/interaction.hpp"
#include "dupnp/ssdp.hpp"

namespace dupnp {

// Runs a whole fleet from one config: every instance, the shared SSDP
// responder and the log sink, under one lifetime. Startup is fail-fast: the
// first instance that cannot come up aborts the deployment.
class Deployment {
public:
    explicit Deployment(DeploymentConfig config,
                        std::filesystem::path base_dir = std::filesystem::current_path());
    ~Deployment();
    Deployment(const Deployment&) = delete;
    Deployment& operator=(const Deployment&) = delete;

    void start(); // throws Error{...} from bundle load / instantiate / bind
    void stop();  // byebye (when advertising), checkpoints, flushes the log

    void checkpoint_all();

    std::vector<Instance*> instances();
    InteractionLog& log() { return *m_log; }
    ssdp::Responder& responder() { return *m_responder; }
    const DeploymentConfig& config() const { return m_config; }

private:
    DeploymentConfig m_config;
    std::filesystem::path m_base_dir;
    std::unique_ptr<InteractionLog> m_log;
    std::unique_ptr<ssdp::Responder> m_responder;
    std::vector<std::unique_ptr<Instance>> m_instances;
    std::thread m_checkpoint_thread;
    std::atomic<bool> m_running{false};
    std::condition_variable m_stop_cv;
    std::mutex m_stop_mutex;
};

bool is_multicast_address(const std::string& address);

} // namespace dupnp
