#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dupnp {

// Discovery-layer identity of one deployed honeypot instance, derived from
// its bundle manifest and endpoint configuration.
struct InstanceIdentity {
    std::string uuid; // "uuid:"-prefixed, unique across a deployment
    std::vector<std::string> device_types;
    std::vector<std::string> service_types;
    std::string http_address;
    uint16_t http_port = 0;
    std::string root_description_path; // starts with '/'
    std::string server_header;         // mirrored from the cloned device

    std::string location_url() const {
        return "http://" + http_address + ":" + std::to_string(http_port) +
               root_description_path;
    }
};

} // namespace dupnp
