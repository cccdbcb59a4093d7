#include "dupnp/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "dupnp/errors.hpp"

namespace dupnp {

using ordered_json = nlohmann::ordered_json;

namespace {

void reject_unknown(const ordered_json& j, const std::set<std::string>& known,
                    const std::string& where) {
    if (!j.is_object()) throw Error(Errc::config_invalid, where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key))
            throw Error(Errc::config_invalid, "unknown key \"" + key + "\" in " + where);
    }
}

uint16_t parse_port(const ordered_json& j, const std::string& where) {
    if (!j.is_number_unsigned() || j.get<uint64_t>() > 65535)
        throw Error(Errc::config_invalid, where + " must be a port number");
    return static_cast<uint16_t>(j.get<uint64_t>());
}

} // namespace

DeploymentConfig parse_deployment_config(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const std::exception& e) {
        throw Error(Errc::config_invalid, std::string("not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"instances", "ssdp", "log", "checkpoint_interval_seconds"}, "config");

    DeploymentConfig config;
    if (!j.contains("instances") || !j["instances"].is_array() || j["instances"].empty())
        throw Error(Errc::config_invalid, "instances must be a non-empty array");

    size_t index = 0;
    for (const auto& entry : j["instances"]) {
        std::string where = "instances[" + std::to_string(index) + "]";
        reject_unknown(entry,
                       {"bundle_path", "bind_address", "http_port", "uuid_policy",
                        "response_delay_ms"},
                       where);
        InstanceEntry inst;
        if (!entry.contains("bundle_path") || !entry["bundle_path"].is_string())
            throw Error(Errc::config_invalid, where + ".bundle_path is required");
        inst.bundle_path = entry["bundle_path"].get<std::string>();
        if (entry.contains("bind_address")) {
            if (!entry["bind_address"].is_string())
                throw Error(Errc::config_invalid, where + ".bind_address must be a string");
            inst.bind_address = entry["bind_address"].get<std::string>();
        }
        if (entry.contains("http_port"))
            inst.http_port = parse_port(entry["http_port"], where + ".http_port");
        if (entry.contains("response_delay_ms")) {
            if (!entry["response_delay_ms"].is_number_unsigned())
                throw Error(Errc::config_invalid, where + ".response_delay_ms must be unsigned");
            inst.response_delay_ms = entry["response_delay_ms"].get<int>();
        }
        if (entry.contains("uuid_policy")) {
            std::string policy = entry["uuid_policy"].is_string()
                                     ? entry["uuid_policy"].get<std::string>()
                                     : "";
            if (policy == "preserve") inst.uuid_policy = UuidPolicy::preserve;
            else if (policy == "randomize") inst.uuid_policy = UuidPolicy::randomize;
            else
                throw Error(Errc::config_invalid,
                            where + ".uuid_policy must be \"preserve\" or \"randomize\"");
        }
        config.instances.push_back(std::move(inst));
        ++index;
    }

    // No two instances may share an endpoint. Port 0 entries are exempt:
    // the kernel assigns those.
    for (size_t a = 0; a < config.instances.size(); ++a) {
        for (size_t b = a + 1; b < config.instances.size(); ++b) {
            const auto& x = config.instances[a];
            const auto& y = config.instances[b];
            if (x.http_port != 0 && x.http_port == y.http_port &&
                x.bind_address == y.bind_address)
                throw Error(Errc::config_invalid,
                            "instances[" + std::to_string(a) + "] and instances[" +
                                std::to_string(b) + "] share endpoint " + x.bind_address +
                                ":" + std::to_string(x.http_port));
        }
    }

    if (j.contains("ssdp")) {
        const auto& s = j["ssdp"];
        reject_unknown(s, {"address", "port", "bind_address", "advertise"}, "ssdp");
        if (s.contains("address")) {
            if (!s["address"].is_string())
                throw Error(Errc::config_invalid, "ssdp.address must be a string");
            config.ssdp.address = s["address"].get<std::string>();
        }
        if (s.contains("port")) config.ssdp.port = parse_port(s["port"], "ssdp.port");
        if (s.contains("bind_address")) {
            if (!s["bind_address"].is_string())
                throw Error(Errc::config_invalid, "ssdp.bind_address must be a string");
            config.ssdp.bind_address = s["bind_address"].get<std::string>();
        }
        if (s.contains("advertise")) {
            if (!s["advertise"].is_boolean())
                throw Error(Errc::config_invalid, "ssdp.advertise must be a boolean");
            config.ssdp.advertise = s["advertise"].get<bool>();
        }
    }

    if (j.contains("log")) {
        const auto& l = j["log"];
        reject_unknown(l, {"sink_path", "raw_capture_cap"}, "log");
        if (l.contains("sink_path")) {
            if (!l["sink_path"].is_string())
                throw Error(Errc::config_invalid, "log.sink_path must be a string");
            config.log.sink_path = l["sink_path"].get<std::string>();
        }
        if (l.contains("raw_capture_cap")) {
            if (!l["raw_capture_cap"].is_number_unsigned())
                throw Error(Errc::config_invalid, "log.raw_capture_cap must be unsigned");
            config.log.raw_capture_cap = l["raw_capture_cap"].get<size_t>();
        }
    }

    if (j.contains("checkpoint_interval_seconds")) {
        if (!j["checkpoint_interval_seconds"].is_number_unsigned())
            throw Error(Errc::config_invalid, "checkpoint_interval_seconds must be unsigned");
        config.checkpoint_interval_seconds = j["checkpoint_interval_seconds"].get<int>();
    }
    return config;
}

DeploymentConfig load_deployment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::config_invalid, "cannot read " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_deployment_config(text);
}

std::string serialize_deployment_config(const DeploymentConfig& config) {
    ordered_json j;
    ordered_json instances = ordered_json::array();
    for (const auto& inst : config.instances) {
        instances.push_back(ordered_json{
            {"bundle_path", inst.bundle_path},
            {"bind_address", inst.bind_address},
            {"http_port", inst.http_port},
            {"uuid_policy", inst.uuid_policy == UuidPolicy::preserve ? "preserve" : "randomize"},
            {"response_delay_ms", inst.response_delay_ms},
        });
    }
    j["instances"] = std::move(instances);
    j["ssdp"] = ordered_json{{"address", config.ssdp.address},
                             {"port", config.ssdp.port},
                             {"bind_address", config.ssdp.bind_address},
                             {"advertise", config.ssdp.advertise}};
    j["log"] = ordered_json{{"sink_path", config.log.sink_path},
                            {"raw_capture_cap", config.log.raw_capture_cap}};
    j["checkpoint_interval_seconds"] = config.checkpoint_interval_seconds;
    return j.dump(2) + "\n";
}

} // namespace dupnp
