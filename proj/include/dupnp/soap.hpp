#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dupnp/description.hpp"
#include "dupnp/http.hpp"

namespace dupnp::soap {

inline constexpr const char* k_envelope_ns = "http://schemas.xmlsoap.org/soap/envelope/";
inline constexpr const char* k_encoding_ns = "http://schemas.xmlsoap.org/soap/encoding/";
inline constexpr const char* k_control_ns = "urn:schemas-upnp-org:control-1-0";
inline constexpr const char* k_content_type = "text/xml; charset=\"utf-8\"";

struct Argument {
    std::string name;
    std::string value;
    bool operator==(const Argument&) const = default;
};

struct ActionInvocation {
    std::string service_type;
    std::string action_name;
    std::vector<Argument> arguments; // order preserved

    // SOAPACTION header value, quotes included.
    std::string soap_action() const {
        return "\"" + service_type + "#" + action_name + "\"";
    }
    bool operator==(const ActionInvocation&) const = default;
};

struct ActionSuccess {
    std::string action_name;
    std::vector<Argument> out_arguments;
    bool operator==(const ActionSuccess&) const = default;
};

struct ActionFault {
    int error_code = 501; // {401, 402, 501} or [600, 699]
    std::string error_description;
    bool operator==(const ActionFault&) const = default;
};

using ActionResult = std::variant<ActionSuccess, ActionFault>;

bool is_valid_fault_code(int code);

// UPnP DA fault vocabulary used by the emulator.
inline constexpr int k_fault_invalid_action = 401;
inline constexpr int k_fault_invalid_args = 402;
inline constexpr int k_fault_action_failed = 501;

// Decodes a control POST. Throws Error{not_soap | header_body_mismatch |
// unknown_content_type}. The action name and service type must agree
// between the SOAPACTION header and the body element.
ActionInvocation parse_action_request(const http::Request& request);

// Builds the control POST for an invocation (client side; used by the
// scanner and the benchmark driver).
http::Request build_action_request(const ActionInvocation& inv, const std::string& control_path,
                                   const std::string& host_header);

// Builds the success response. When `def` is given, out_args must match its
// out-direction arguments by name and order, else Error{argument_mismatch}.
http::Response build_action_response(const ActionInvocation& inv,
                                     const std::vector<Argument>& out_args,
                                     const desc::ActionDef* def = nullptr);

http::Response build_fault(int error_code, const std::string& error_description);

// Inverse of the builders. Throws Error{not_soap | unexpected_action_name}.
ActionResult parse_action_response(const http::Response& response,
                                   const desc::ActionDef& expected);

} // namespace dupnp::soap
