#include "dupnp/description.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <set>

#include "dupnp/errors.hpp"
#include "dupnp/util.hpp"

namespace dupnp::desc {

std::optional<DataType> data_type_from_text(std::string_view text) {
    if (text == "string") return DataType::string_;
    if (text == "boolean") return DataType::boolean;
    if (text == "i1") return DataType::i1;
    if (text == "i2") return DataType::i2;
    if (text == "i4") return DataType::i4;
    if (text == "ui1") return DataType::ui1;
    if (text == "ui2") return DataType::ui2;
    if (text == "ui4") return DataType::ui4;
    if (text == "r4") return DataType::r4;
    if (text == "r8") return DataType::r8;
    if (text == "dateTime") return DataType::date_time;
    if (text == "bin.base64") return DataType::bin_base64;
    if (text == "uri") return DataType::uri;
    return std::nullopt;
}

std::string_view to_string(DataType type) {
    switch (type) {
    case DataType::string_: return "string";
    case DataType::boolean: return "boolean";
    case DataType::i1: return "i1";
    case DataType::i2: return "i2";
    case DataType::i4: return "i4";
    case DataType::ui1: return "ui1";
    case DataType::ui2: return "ui2";
    case DataType::ui4: return "ui4";
    case DataType::r4: return "r4";
    case DataType::r8: return "r8";
    case DataType::date_time: return "dateTime";
    case DataType::bin_base64: return "bin.base64";
    case DataType::uri: return "uri";
    case DataType::opaque: return "string";
    }
    return "string";
}

ActionClass classify_action(const ActionDef& action) {
    bool has_in = false;
    bool has_out = false;
    for (const auto& arg : action.arguments) {
        if (arg.direction == Direction::in) has_in = true;
        else has_out = true;
    }
    if (has_in && has_out) return ActionClass::mixed;
    if (has_in) return ActionClass::write;
    return ActionClass::read;
}

const StateVariableDef* ServiceDescription::variable(std::string_view name) const {
    for (const auto& v : state_variables) {
        if (v.name == name) return &v;
    }
    return nullptr;
}

const ActionDef* ServiceDescription::action(std::string_view name) const {
    for (const auto& a : actions) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

std::vector<std::string> DeviceDescription::icon_urls() const {
    std::vector<std::string> out;
    for (const auto& ext : extensions) {
        if (ext.local_name() != "iconList") continue;
        for (const auto& icon : ext.children) {
            if (icon.local_name() != "icon") continue;
            std::string url = icon.child_text("url");
            if (!url.empty()) out.push_back(std::move(url));
        }
    }
    return out;
}

static void collect_types(const DeviceDescription& d, std::vector<std::string>& devices,
                          std::vector<std::string>& services) {
    auto push_unique = [](std::vector<std::string>& v, const std::string& s) {
        if (!s.empty() && std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    push_unique(devices, d.device_type);
    for (const auto& s : d.services) push_unique(services, s.service_type);
    for (const auto& e : d.embedded_devices) collect_types(e, devices, services);
}

std::vector<std::string> DeviceDescription::all_device_types() const {
    std::vector<std::string> devices, services;
    collect_types(*this, devices, services);
    return devices;
}

std::vector<std::string> DeviceDescription::all_service_types() const {
    std::vector<std::string> devices, services;
    collect_types(*this, devices, services);
    return services;
}

bool DeviceDescription::operator==(const DeviceDescription& other) const {
    if (!(device_type == other.device_type && friendly_name == other.friendly_name &&
          manufacturer == other.manufacturer && model_name == other.model_name &&
          serial_number == other.serial_number && udn == other.udn &&
          url_base == other.url_base && services == other.services &&
          embedded_devices == other.embedded_devices &&
          presentation_urls == other.presentation_urls &&
          spec_version_major == other.spec_version_major &&
          spec_version_minor == other.spec_version_minor))
        return false;
    if (extensions.size() != other.extensions.size()) return false;
    for (size_t i = 0; i < extensions.size(); ++i) {
        if (!xml::structurally_equal(extensions[i], other.extensions[i])) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void schema_fail(std::string_view what) {
    throw Error(Errc::schema_violation, std::string(what));
}

std::string required_child_text(const xml::Element& e, std::string_view name) {
    const xml::Element* c = e.child(name);
    if (!c || c->text.empty()) schema_fail(name);
    return c->text;
}

ServiceRef parse_service_ref(const xml::Element& e) {
    ServiceRef ref;
    ref.service_type = required_child_text(e, "serviceType");
    ref.service_id = required_child_text(e, "serviceId");
    ref.scpd_url = required_child_text(e, "SCPDURL");
    ref.control_url = required_child_text(e, "controlURL");
    ref.event_sub_url = required_child_text(e, "eventSubURL");
    if (ref.scpd_url == ref.control_url || ref.scpd_url == ref.event_sub_url ||
        ref.control_url == ref.event_sub_url)
        schema_fail("service URLs must be distinct: " + ref.service_id);
    return ref;
}

bool is_known_device_child(std::string_view local) {
    return local == "deviceType" || local == "friendlyName" || local == "manufacturer" ||
           local == "modelName" || local == "serialNumber" || local == "UDN" ||
           local == "serviceList" || local == "deviceList" || local == "presentationURL";
}

DeviceDescription parse_device_element(const xml::Element& dev, int depth) {
    if (depth > 8) schema_fail("embedded device nesting too deep");
    DeviceDescription d;
    d.device_type = required_child_text(dev, "deviceType");
    d.friendly_name = dev.child_text("friendlyName");
    d.manufacturer = dev.child_text("manufacturer");
    d.model_name = dev.child_text("modelName");
    d.serial_number = dev.child_text("serialNumber");
    d.udn = required_child_text(dev, "UDN");
    if (d.udn.rfind("uuid:", 0) != 0) schema_fail("UDN must start with uuid:");

    for (const auto& child : dev.children) {
        std::string_view local = child.local_name();
        if (local == "serviceList") {
            for (const auto& svc : child.children) {
                if (svc.local_name() == "service") d.services.push_back(parse_service_ref(svc));
            }
        } else if (local == "deviceList") {
            for (const auto& sub : child.children) {
                if (sub.local_name() == "device")
                    d.embedded_devices.push_back(parse_device_element(sub, depth + 1));
            }
        } else if (local == "presentationURL") {
            if (!child.text.empty()) d.presentation_urls.push_back(child.text);
        } else if (!is_known_device_child(local)) {
            d.extensions.push_back(child);
        }
    }
    return d;
}

Direction parse_direction(const std::string& text, const std::string& arg_name) {
    if (text == "in") return Direction::in;
    if (text == "out") return Direction::out;
    schema_fail("direction of argument " + arg_name);
}

} // namespace

DeviceDescription parse_device_description(std::string_view xml_bytes) {
    xml::Element root = xml::parse(xml_bytes);
    if (root.local_name() != "root") schema_fail("root");
    const xml::Element* dev = root.child("device");
    if (!dev) schema_fail("device");
    DeviceDescription d = parse_device_element(*dev, 0);
    if (const xml::Element* base = root.child("URLBase")) {
        if (!base->text.empty()) d.url_base = base->text;
    }
    if (const xml::Element* ver = root.child("specVersion")) {
        try {
            d.spec_version_major = std::stoi(ver->child_text("major"));
            d.spec_version_minor = std::stoi(ver->child_text("minor"));
        } catch (...) {
            // tolerated; keep defaults
        }
    }
    d.raw_source = std::string(xml_bytes);
    return d;
}

namespace {

StateVariableDef parse_state_variable(const xml::Element& e) {
    StateVariableDef v;
    v.name = required_child_text(e, "name");
    v.data_type_text = required_child_text(e, "dataType");
    if (auto dt = data_type_from_text(v.data_type_text)) {
        v.data_type = *dt;
    } else {
        // Unrecognized vendor type: carried opaquely, values pass through.
        v.data_type = DataType::opaque;
    }
    if (const xml::Element* def = e.child("defaultValue")) v.default_value = def->text;
    if (const xml::Element* list = e.child("allowedValueList")) {
        for (const auto& av : list->children) {
            if (av.local_name() == "allowedValue") v.allowed_values.push_back(av.text);
        }
    }
    if (const xml::Element* range = e.child("allowedValueRange")) {
        AllowedRange r;
        r.minimum = range->child_text("minimum");
        r.maximum = range->child_text("maximum");
        r.step = range->child_text("step");
        v.allowed_range = std::move(r);
    }
    if (!v.allowed_values.empty() && v.allowed_range)
        schema_fail("allowedValueList and allowedValueRange are exclusive: " + v.name);
    const std::string* send = e.attribute("sendEvents");
    v.send_events = !send || iequals(*send, "yes");
    if (v.default_value && !validate_value(v, *v.default_value))
        schema_fail("defaultValue of " + v.name);
    return v;
}

ActionDef parse_action(const xml::Element& e) {
    ActionDef a;
    a.name = required_child_text(e, "name");
    if (const xml::Element* args = e.child("argumentList")) {
        std::set<std::string> seen;
        for (const auto& arg_el : args->children) {
            if (arg_el.local_name() != "argument") continue;
            ActionArgument arg;
            arg.name = required_child_text(arg_el, "name");
            arg.direction = parse_direction(required_child_text(arg_el, "direction"), arg.name);
            arg.related_state_variable = required_child_text(arg_el, "relatedStateVariable");
            if (!seen.insert(arg.name).second)
                schema_fail("duplicate argument " + arg.name + " in action " + a.name);
            a.arguments.push_back(std::move(arg));
        }
    }
    return a;
}

} // namespace

ServiceDescription parse_service_description(std::string_view xml_bytes) {
    xml::Element root = xml::parse(xml_bytes);
    if (root.local_name() != "scpd") schema_fail("scpd");
    ServiceDescription s;

    const xml::Element* table = root.child("serviceStateTable");
    if (!table) schema_fail("serviceStateTable");
    std::set<std::string> var_names;
    for (const auto& var_el : table->children) {
        if (var_el.local_name() != "stateVariable") continue;
        StateVariableDef v = parse_state_variable(var_el);
        if (!var_names.insert(v.name).second) schema_fail("duplicate state variable " + v.name);
        s.state_variables.push_back(std::move(v));
    }

    if (const xml::Element* actions = root.child("actionList")) {
        std::set<std::string> action_names;
        for (const auto& action_el : actions->children) {
            if (action_el.local_name() != "action") continue;
            ActionDef a = parse_action(action_el);
            if (!action_names.insert(a.name).second) schema_fail("duplicate action " + a.name);
            for (const auto& arg : a.arguments) {
                if (!var_names.count(arg.related_state_variable))
                    schema_fail(arg.related_state_variable);
            }
            s.actions.push_back(std::move(a));
        }
    }

    for (const auto& child : root.children) {
        std::string_view local = child.local_name();
        if (local != "actionList" && local != "serviceStateTable" && local != "specVersion")
            s.extensions.push_back(child);
    }
    s.raw_source = std::string(xml_bytes);
    return s;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

xml::Element text_el(std::string name, std::string text) {
    xml::Element e;
    e.name = std::move(name);
    e.text = std::move(text);
    return e;
}

xml::Element spec_version_el(int major, int minor) {
    xml::Element v;
    v.name = "specVersion";
    v.children.push_back(text_el("major", std::to_string(major)));
    v.children.push_back(text_el("minor", std::to_string(minor)));
    return v;
}

void check_device_invariants(const DeviceDescription& d) {
    if (d.udn.rfind("uuid:", 0) != 0)
        throw Error(Errc::invariant_violation, "UDN must start with uuid:");
    if (d.device_type.empty())
        throw Error(Errc::invariant_violation, "deviceType is empty");
    for (const auto& s : d.services) {
        if (s.service_type.empty() || s.service_id.empty() || s.scpd_url.empty() ||
            s.control_url.empty() || s.event_sub_url.empty())
            throw Error(Errc::invariant_violation, "incomplete service " + s.service_id);
        if (s.scpd_url == s.control_url || s.scpd_url == s.event_sub_url ||
            s.control_url == s.event_sub_url)
            throw Error(Errc::invariant_violation,
                        "service URLs must be distinct: " + s.service_id);
    }
    for (const auto& e : d.embedded_devices) check_device_invariants(e);
}

xml::Element device_to_element(const DeviceDescription& d) {
    xml::Element dev;
    dev.name = "device";
    dev.children.push_back(text_el("deviceType", d.device_type));
    dev.children.push_back(text_el("friendlyName", d.friendly_name));
    dev.children.push_back(text_el("manufacturer", d.manufacturer));
    dev.children.push_back(text_el("modelName", d.model_name));
    dev.children.push_back(text_el("serialNumber", d.serial_number));
    dev.children.push_back(text_el("UDN", d.udn));
    for (const auto& url : d.presentation_urls)
        dev.children.push_back(text_el("presentationURL", url));

    xml::Element service_list;
    service_list.name = "serviceList";
    for (const auto& s : d.services) {
        xml::Element svc;
        svc.name = "service";
        svc.children.push_back(text_el("serviceType", s.service_type));
        svc.children.push_back(text_el("serviceId", s.service_id));
        svc.children.push_back(text_el("SCPDURL", s.scpd_url));
        svc.children.push_back(text_el("controlURL", s.control_url));
        svc.children.push_back(text_el("eventSubURL", s.event_sub_url));
        service_list.children.push_back(std::move(svc));
    }
    dev.children.push_back(std::move(service_list));

    if (!d.embedded_devices.empty()) {
        xml::Element device_list;
        device_list.name = "deviceList";
        for (const auto& e : d.embedded_devices)
            device_list.children.push_back(device_to_element(e));
        dev.children.push_back(std::move(device_list));
    }
    for (const auto& ext : d.extensions) dev.children.push_back(ext);
    return dev;
}

} // namespace

std::string serialize_device_description(const DeviceDescription& d, SerializeMode mode) {
    if (mode == SerializeMode::prefer_raw && !d.raw_source.empty()) return d.raw_source;
    check_device_invariants(d);
    xml::Element root;
    root.name = "root";
    root.attributes.emplace_back("xmlns", k_device_ns);
    root.children.push_back(spec_version_el(d.spec_version_major, d.spec_version_minor));
    if (d.url_base) root.children.push_back(text_el("URLBase", *d.url_base));
    root.children.push_back(device_to_element(d));
    return xml::serialize(root);
}

std::string serialize_service_description(const ServiceDescription& s, SerializeMode mode) {
    if (mode == SerializeMode::prefer_raw && !s.raw_source.empty()) return s.raw_source;
    for (const auto& a : s.actions) {
        for (const auto& arg : a.arguments) {
            if (!s.variable(arg.related_state_variable))
                throw Error(Errc::invariant_violation,
                            "dangling relatedStateVariable " + arg.related_state_variable);
        }
    }
    for (const auto& v : s.state_variables) {
        if (!v.allowed_values.empty() && v.allowed_range)
            throw Error(Errc::invariant_violation,
                        "allowedValueList and allowedValueRange are exclusive: " + v.name);
    }

    xml::Element root;
    root.name = "scpd";
    root.attributes.emplace_back("xmlns", k_service_ns);
    root.children.push_back(spec_version_el(1, 0));

    xml::Element actions;
    actions.name = "actionList";
    for (const auto& a : s.actions) {
        xml::Element action;
        action.name = "action";
        action.children.push_back(text_el("name", a.name));
        xml::Element args;
        args.name = "argumentList";
        for (const auto& arg : a.arguments) {
            xml::Element arg_el;
            arg_el.name = "argument";
            arg_el.children.push_back(text_el("name", arg.name));
            arg_el.children.push_back(
                text_el("direction", arg.direction == Direction::in ? "in" : "out"));
            arg_el.children.push_back(
                text_el("relatedStateVariable", arg.related_state_variable));
            args.children.push_back(std::move(arg_el));
        }
        if (!args.children.empty()) action.children.push_back(std::move(args));
        actions.children.push_back(std::move(action));
    }
    root.children.push_back(std::move(actions));

    xml::Element table;
    table.name = "serviceStateTable";
    for (const auto& v : s.state_variables) {
        xml::Element var;
        var.name = "stateVariable";
        var.attributes.emplace_back("sendEvents", v.send_events ? "yes" : "no");
        var.children.push_back(text_el("name", v.name));
        var.children.push_back(text_el("dataType", v.data_type_text));
        if (v.default_value) var.children.push_back(text_el("defaultValue", *v.default_value));
        if (!v.allowed_values.empty()) {
            xml::Element list;
            list.name = "allowedValueList";
            for (const auto& av : v.allowed_values)
                list.children.push_back(text_el("allowedValue", av));
            var.children.push_back(std::move(list));
        }
        if (v.allowed_range) {
            xml::Element range;
            range.name = "allowedValueRange";
            range.children.push_back(text_el("minimum", v.allowed_range->minimum));
            range.children.push_back(text_el("maximum", v.allowed_range->maximum));
            if (!v.allowed_range->step.empty())
                range.children.push_back(text_el("step", v.allowed_range->step));
            var.children.push_back(std::move(range));
        }
        table.children.push_back(std::move(var));
    }
    root.children.push_back(std::move(table));
    for (const auto& ext : s.extensions) root.children.push_back(ext);
    return xml::serialize(root);
}

// ---------------------------------------------------------------------------
// Value validation

namespace {

bool parse_integer(std::string_view s, long long& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
    if (s.empty()) return false;
    std::string buf(s);
    char* end = nullptr;
    out = std::strtod(buf.c_str(), &end);
    return end && *end == '\0' && end != buf.c_str();
}

bool integer_in_width(long long v, DataType type) {
    switch (type) {
    case DataType::i1: return v >= -128 && v <= 127;
    case DataType::i2: return v >= -32768 && v <= 32767;
    case DataType::i4: return v >= -2147483648LL && v <= 2147483647LL;
    case DataType::ui1: return v >= 0 && v <= 255;
    case DataType::ui2: return v >= 0 && v <= 65535;
    case DataType::ui4: return v >= 0 && v <= 4294967295LL;
    default: return true;
    }
}

bool valid_boolean(std::string_view s) {
    return s == "0" || s == "1" || iequals(s, "true") || iequals(s, "false") ||
           iequals(s, "yes") || iequals(s, "no");
}

bool valid_base64(std::string_view s) {
    size_t significant = 0;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/' || c == '=';
        if (!ok) return false;
        ++significant;
    }
    return significant % 4 == 0;
}

bool valid_date_time(std::string_view s) {
    // ISO 8601 subset: YYYY-MM-DD with optional Thh:mm:ss[.frac][Z|±hh:mm].
    auto digits = [&](size_t at, size_t n) {
        if (at + n > s.size()) return false;
        for (size_t i = at; i < at + n; ++i)
            if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
        return true;
    };
    if (!digits(0, 4) || s.size() < 10 || s[4] != '-' || !digits(5, 2) || s[7] != '-' ||
        !digits(8, 2))
        return false;
    if (s.size() == 10) return true;
    if (s[10] != 'T' || !digits(11, 2) || s.size() < 16 || s[13] != ':' || !digits(14, 2))
        return false;
    size_t pos = 16;
    if (pos < s.size() && s[pos] == ':') {
        if (!digits(pos + 1, 2)) return false;
        pos += 3;
    }
    if (pos < s.size() && s[pos] == '.') {
        size_t start = ++pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos == start) return false;
    }
    if (pos == s.size()) return true;
    if (s[pos] == 'Z') return pos + 1 == s.size();
    if ((s[pos] == '+' || s[pos] == '-') && digits(pos + 1, 2) && pos + 3 < s.size() &&
        s[pos + 3] == ':' && digits(pos + 4, 2))
        return pos + 6 == s.size();
    return false;
}

bool valid_for_type(DataType type, std::string_view value) {
    switch (type) {
    case DataType::string_:
    case DataType::uri:
    case DataType::opaque:
        return true;
    case DataType::boolean:
        return valid_boolean(value);
    case DataType::i1:
    case DataType::i2:
    case DataType::i4:
    case DataType::ui1:
    case DataType::ui2:
    case DataType::ui4: {
        long long v;
        return parse_integer(value, v) && integer_in_width(v, type);
    }
    case DataType::r4:
    case DataType::r8: {
        double v;
        return parse_real(value, v);
    }
    case DataType::date_time:
        return valid_date_time(value);
    case DataType::bin_base64:
        return valid_base64(value);
    }
    return false;
}

bool is_integer_type(DataType type) {
    switch (type) {
    case DataType::i1:
    case DataType::i2:
    case DataType::i4:
    case DataType::ui1:
    case DataType::ui2:
    case DataType::ui4:
        return true;
    default:
        return false;
    }
}

bool is_numeric_type(DataType type) {
    return is_integer_type(type) || type == DataType::r4 || type == DataType::r8;
}

} // namespace

bool validate_value(const StateVariableDef& def, std::string_view value) {
    if (!valid_for_type(def.data_type, value)) return false;
    if (!def.allowed_values.empty()) {
        return std::find(def.allowed_values.begin(), def.allowed_values.end(), value) !=
               def.allowed_values.end();
    }
    if (def.allowed_range && is_numeric_type(def.data_type)) {
        double v, lo, hi;
        if (!parse_real(value, v)) return false;
        if (parse_real(def.allowed_range->minimum, lo) && v < lo) return false;
        if (parse_real(def.allowed_range->maximum, hi) && v > hi) return false;
        if (is_integer_type(def.data_type) && !def.allowed_range->step.empty()) {
            long long iv, imin, istep;
            if (parse_integer(value, iv) && parse_integer(def.allowed_range->minimum, imin) &&
                parse_integer(def.allowed_range->step, istep) && istep > 0 &&
                (iv - imin) % istep != 0)
                return false;
        }
    }
    return true;
}

std::string zero_value(DataType type) {
    switch (type) {
    case DataType::boolean:
        return "false";
    case DataType::i1:
    case DataType::i2:
    case DataType::i4:
    case DataType::ui1:
    case DataType::ui2:
    case DataType::ui4:
    case DataType::r4:
    case DataType::r8:
        return "0";
    case DataType::date_time:
        return "1970-01-01T00:00:00";
    default:
        return "";
    }
}

std::string initial_value(const StateVariableDef& def) {
    if (def.default_value) return *def.default_value;
    if (!def.allowed_values.empty()) return def.allowed_values.front();
    if (def.allowed_range && !def.allowed_range->minimum.empty())
        return def.allowed_range->minimum;
    return zero_value(def.data_type);
}

} // namespace dupnp::desc
