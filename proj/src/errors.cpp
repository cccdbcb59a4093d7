#include "dupnp/errors.hpp"

namespace dupnp {

std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::malformed_start_line: return "MalformedStartLine";
    case Errc::missing_header: return "MissingHeader";
    case Errc::bad_man_value: return "BadManValue";
    case Errc::socket_bind_failure: return "SocketBindFailure";
    case Errc::socket_send_failure: return "SocketSendFailure";
    case Errc::xml_syntax: return "XmlSyntaxError";
    case Errc::schema_violation: return "SchemaViolation";
    case Errc::invariant_violation: return "InvariantViolation";
    case Errc::not_soap: return "NotSoap";
    case Errc::header_body_mismatch: return "HeaderBodyMismatch";
    case Errc::unknown_content_type: return "UnknownContentType";
    case Errc::argument_mismatch: return "ArgumentMismatch";
    case Errc::unexpected_action_name: return "UnexpectedActionName";
    case Errc::missing_callback: return "MissingCallback";
    case Errc::unknown_sid: return "UnknownSid";
    case Errc::io_failure: return "IoFailure";
    case Errc::manifest_corrupt: return "ManifestCorrupt";
    case Errc::root_fetch_failed: return "RootFetchFailed";
    case Errc::control_unreachable: return "ControlUnreachable";
    case Errc::port_in_use: return "PortInUse";
    case Errc::bundle_invalid: return "BundleInvalid";
    case Errc::config_invalid: return "ConfigInvalid";
    case Errc::sink_missing: return "SinkMissing";
    }
    return "UnknownError";
}

} // namespace dupnp
