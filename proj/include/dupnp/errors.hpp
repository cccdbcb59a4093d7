#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dupnp {

enum class Errc {
    // ssdp
    malformed_start_line,
    missing_header,
    bad_man_value,
    socket_bind_failure,
    socket_send_failure,
    // xml / description
    xml_syntax,
    schema_violation,
    invariant_violation,
    // soap
    not_soap,
    header_body_mismatch,
    unknown_content_type,
    argument_mismatch,
    unexpected_action_name,
    // gena
    missing_callback,
    unknown_sid,
    // bundle / scanner
    io_failure,
    manifest_corrupt,
    root_fetch_failed,
    control_unreachable,
    // emulator / cli
    port_in_use,
    bundle_invalid,
    config_invalid,
    sink_missing,
};

std::string_view to_string(Errc code);

// Single exception type carrying a machine-checkable code plus a human detail
// string such as the name of the offending header or XML element.
class Error : public std::runtime_error {
public:
    Error(Errc code, std::string detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail),
          m_code(code),
          m_detail(std::move(detail)) {}

    Errc code() const noexcept { return m_code; }
    const std::string& detail() const noexcept { return m_detail; }

private:
    Errc m_code;
    std::string m_detail;
};

} // namespace dupnp
