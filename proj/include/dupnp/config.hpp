#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dupnp/emulator.hpp"

namespace dupnp {

struct InstanceEntry {
    std::string bundle_path;
    std::string bind_address = "127.0.0.1";
    uint16_t http_port = 0;
    UuidPolicy uuid_policy = UuidPolicy::preserve;
    int response_delay_ms = 0; // optional latency padding per request
};

struct DeploymentConfig {
    std::vector<InstanceEntry> instances;
    struct {
        std::string address = "239.255.255.250";
        uint16_t port = 1900;
        std::string bind_address = "0.0.0.0";
        bool advertise = false;
    } ssdp;
    struct {
        std::string sink_path = "interactions.log";
        size_t raw_capture_cap = 2048;
    } log;
    int checkpoint_interval_seconds = 0; // 0: checkpoint only on shutdown
};

// Strict parse: unknown keys, duplicate endpoints and malformed fields all
// throw Error{config_invalid} naming the offending field.
DeploymentConfig parse_deployment_config(const std::string& json_text);
DeploymentConfig load_deployment_config(const std::filesystem::path& path);

std::string serialize_deployment_config(const DeploymentConfig& config);

} // namespace dupnp
