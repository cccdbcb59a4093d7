#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dupnp/xml.hpp"

namespace dupnp::desc {

inline constexpr const char* k_device_ns = "urn:schemas-upnp-org:device-1-0";
inline constexpr const char* k_service_ns = "urn:schemas-upnp-org:service-1-0";

// The UPnP DA 1.0 data type table. Anything else is carried as `opaque`
// with the original type text preserved, accepted with a warning rather
// than rejected.
enum class DataType {
    string_,
    boolean,
    i1,
    i2,
    i4,
    ui1,
    ui2,
    ui4,
    r4,
    r8,
    date_time,
    bin_base64,
    uri,
    opaque,
};

std::optional<DataType> data_type_from_text(std::string_view text);
std::string_view to_string(DataType type);

struct AllowedRange {
    std::string minimum;
    std::string maximum;
    std::string step; // empty: unconstrained granularity
    bool operator==(const AllowedRange&) const = default;
};

struct StateVariableDef {
    std::string name;
    DataType data_type = DataType::string_;
    std::string data_type_text = "string"; // as written, kept for re-serialization
    std::optional<std::string> default_value;
    std::vector<std::string> allowed_values;  // mutually exclusive with range
    std::optional<AllowedRange> allowed_range;
    bool send_events = true;

    bool operator==(const StateVariableDef&) const = default;
};

enum class Direction { in, out };

struct ActionArgument {
    std::string name;
    Direction direction = Direction::in;
    std::string related_state_variable;
    bool operator==(const ActionArgument&) const = default;
};

struct ActionDef {
    std::string name;
    std::vector<ActionArgument> arguments;
    bool operator==(const ActionDef&) const = default;
};

enum class ActionClass { read, write, mixed };

// read: all arguments out (including the zero-argument case);
// write: in arguments only; mixed: both, treated as write-then-report.
ActionClass classify_action(const ActionDef& action);

struct ServiceDescription {
    std::vector<ActionDef> actions;
    std::vector<StateVariableDef> state_variables;
    std::vector<xml::Element> extensions; // unknown scpd-level elements
    std::string raw_source;               // bytes this was parsed from, if any

    const StateVariableDef* variable(std::string_view name) const;
    const ActionDef* action(std::string_view name) const;

    bool operator==(const ServiceDescription& other) const {
        return actions == other.actions && state_variables == other.state_variables;
    }
};

struct ServiceRef {
    std::string service_type;
    std::string service_id;
    std::string scpd_url;
    std::string control_url;
    std::string event_sub_url;
    bool operator==(const ServiceRef&) const = default;
};

struct DeviceDescription {
    std::string device_type;
    std::string friendly_name;
    std::string manufacturer;
    std::string model_name;
    std::string serial_number;
    std::string udn; // "uuid:"-prefixed
    std::optional<std::string> url_base;
    std::vector<ServiceRef> services;
    std::vector<DeviceDescription> embedded_devices;
    std::vector<std::string> presentation_urls;
    std::vector<xml::Element> extensions; // unknown device-level elements, in order
    int spec_version_major = 1;
    int spec_version_minor = 0;
    std::string raw_source; // bytes this was parsed from, if any

    // Icon URLs live inside preserved <iconList> extensions.
    std::vector<std::string> icon_urls() const;
    // Root-first, document order, deduplicated.
    std::vector<std::string> all_device_types() const;
    std::vector<std::string> all_service_types() const;

    bool operator==(const DeviceDescription& other) const;
};

// Parsers throw Error{xml_syntax} for malformed XML and
// Error{schema_violation, <element>} for missing/invalid mandatory content,
// including dangling relatedStateVariable references in SCPDs.
DeviceDescription parse_device_description(std::string_view xml_bytes);
ServiceDescription parse_service_description(std::string_view xml_bytes);

enum class SerializeMode {
    prefer_raw, // re-serve captured bytes verbatim when the value was parsed
    regenerate,
};

// Throw Error{invariant_violation} when the value breaks its own invariants.
std::string serialize_device_description(const DeviceDescription& d,
                                         SerializeMode mode = SerializeMode::prefer_raw);
std::string serialize_service_description(const ServiceDescription& s,
                                          SerializeMode mode = SerializeMode::prefer_raw);

// Value validation against data type, allowed values and allowed range.
bool validate_value(const StateVariableDef& def, std::string_view value);
std::string zero_value(DataType type);
// default_value, else first allowed value, else range minimum, else zero value.
std::string initial_value(const StateVariableDef& def);

} // namespace dupnp::desc
