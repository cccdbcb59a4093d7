#include "dupnp/soap.hpp"

#include "dupnp/errors.hpp"
#include "dupnp/util.hpp"
#include "dupnp/xml.hpp"

namespace dupnp::soap {

bool is_valid_fault_code(int code) {
    return code == 401 || code == 402 || code == 501 || (code >= 600 && code <= 699);
}

namespace {

// SOAPACTION value: "<service_type>#<action_name>" including the quotes.
std::pair<std::string, std::string> split_soap_action(const std::string& value) {
    std::string v = trim(value);
    if (v.size() < 2 || v.front() != '"' || v.back() != '"')
        throw Error(Errc::not_soap, "SOAPACTION not quoted: " + value);
    v = v.substr(1, v.size() - 2);
    size_t hash = v.rfind('#');
    if (hash == std::string::npos)
        throw Error(Errc::not_soap, "SOAPACTION missing '#': " + value);
    return {v.substr(0, hash), v.substr(hash + 1)};
}

const xml::Element* find_body(const xml::Element& envelope) {
    if (envelope.local_name() != "Envelope") return nullptr;
    return envelope.child("Body");
}

std::string envelope_open() {
    return std::string("<?xml version=\"1.0\"?>\n") +
           "<s:Envelope xmlns:s=\"" + k_envelope_ns + "\" s:encodingStyle=\"" +
           k_encoding_ns + "\">\n<s:Body>\n";
}

std::string envelope_close() { return "</s:Body>\n</s:Envelope>\n"; }

std::string arguments_xml(const std::vector<Argument>& args) {
    std::string out;
    for (const auto& a : args) {
        out += "<" + a.name + ">" + xml::escape(a.value) + "</" + a.name + ">\n";
    }
    return out;
}

std::vector<Argument> arguments_from_element(const xml::Element& action_el) {
    std::vector<Argument> args;
    for (const auto& child : action_el.children) {
        args.push_back({std::string(child.local_name()), child.text});
    }
    return args;
}

} // namespace

ActionInvocation parse_action_request(const http::Request& request) {
    if (!iequals(request.method, "POST"))
        throw Error(Errc::not_soap, "method " + request.method);
    std::string content_type = request.header_or("Content-Type");
    if (!content_type.empty() && to_lower(content_type).find("text/xml") == std::string::npos)
        throw Error(Errc::unknown_content_type, content_type);

    const std::string* soap_action = request.header("SOAPACTION");
    if (!soap_action) throw Error(Errc::not_soap, "missing SOAPACTION header");
    auto [header_service, header_action] = split_soap_action(*soap_action);

    xml::Element envelope;
    try {
        envelope = xml::parse(request.body);
    } catch (const Error&) {
        throw Error(Errc::not_soap, "body is not well-formed XML");
    }
    const xml::Element* body = find_body(envelope);
    if (!body) throw Error(Errc::not_soap, "no Envelope/Body");
    const xml::Element* action_el = nullptr;
    for (const auto& child : body->children) {
        action_el = &child;
        break;
    }
    if (!action_el) throw Error(Errc::not_soap, "empty Body");

    std::string body_action(action_el->local_name());
    std::string body_service = action_el->own_namespace();
    if (body_action != header_action)
        throw Error(Errc::header_body_mismatch,
                    "header says " + header_action + ", body says " + body_action);
    if (!body_service.empty() && body_service != header_service)
        throw Error(Errc::header_body_mismatch,
                    "header says " + header_service + ", body says " + body_service);

    ActionInvocation inv;
    inv.service_type = header_service;
    inv.action_name = header_action;
    inv.arguments = arguments_from_element(*action_el);
    return inv;
}

http::Request build_action_request(const ActionInvocation& inv, const std::string& control_path,
                                   const std::string& host_header) {
    http::Request req;
    req.method = "POST";
    req.target = control_path;
    req.set_header("HOST", host_header);
    req.set_header("CONTENT-TYPE", k_content_type);
    req.set_header("SOAPACTION", inv.soap_action());
    req.body = envelope_open() + "<u:" + inv.action_name + " xmlns:u=\"" +
               xml::escape(inv.service_type) + "\">\n" + arguments_xml(inv.arguments) +
               "</u:" + inv.action_name + ">\n" + envelope_close();
    return req;
}

http::Response build_action_response(const ActionInvocation& inv,
                                     const std::vector<Argument>& out_args,
                                     const desc::ActionDef* def) {
    if (def) {
        std::vector<const desc::ActionArgument*> declared;
        for (const auto& arg : def->arguments) {
            if (arg.direction == desc::Direction::out) declared.push_back(&arg);
        }
        if (declared.size() != out_args.size())
            throw Error(Errc::argument_mismatch,
                        std::to_string(out_args.size()) + " out arguments, " +
                            std::to_string(declared.size()) + " declared");
        for (size_t i = 0; i < declared.size(); ++i) {
            if (declared[i]->name != out_args[i].name)
                throw Error(Errc::argument_mismatch,
                            "expected " + declared[i]->name + ", got " + out_args[i].name);
        }
    }
    http::Response res;
    res.status = 200;
    res.reason = "OK";
    res.set_header("CONTENT-TYPE", k_content_type);
    res.set_header("EXT", "");
    res.body = envelope_open() + "<u:" + inv.action_name + "Response xmlns:u=\"" +
               xml::escape(inv.service_type) + "\">\n" + arguments_xml(out_args) +
               "</u:" + inv.action_name + "Response>\n" + envelope_close();
    return res;
}

http::Response build_fault(int error_code, const std::string& error_description) {
    http::Response res;
    res.status = 500;
    res.reason = "Internal Server Error";
    res.set_header("CONTENT-TYPE", k_content_type);
    res.body = envelope_open() +
               "<s:Fault>\n"
               "<faultcode>s:Client</faultcode>\n"
               "<faultstring>UPnPError</faultstring>\n"
               "<detail>\n"
               "<UPnPError xmlns=\"" + std::string(k_control_ns) + "\">\n"
               "<errorCode>" + std::to_string(error_code) + "</errorCode>\n"
               "<errorDescription>" + xml::escape(error_description) + "</errorDescription>\n"
               "</UPnPError>\n"
               "</detail>\n"
               "</s:Fault>\n" +
               envelope_close();
    return res;
}

ActionResult parse_action_response(const http::Response& response,
                                   const desc::ActionDef& expected) {
    xml::Element envelope;
    try {
        envelope = xml::parse(response.body);
    } catch (const Error&) {
        throw Error(Errc::not_soap, "body is not well-formed XML");
    }
    const xml::Element* body = find_body(envelope);
    if (!body) throw Error(Errc::not_soap, "no Envelope/Body");
    const xml::Element* first = body->children.empty() ? nullptr : &body->children.front();
    if (!first) throw Error(Errc::not_soap, "empty Body");

    if (first->local_name() == "Fault") {
        ActionFault fault;
        fault.error_code = k_fault_action_failed;
        if (const xml::Element* detail = first->child("detail")) {
            if (const xml::Element* upnp_error = detail->child("UPnPError")) {
                try {
                    fault.error_code = std::stoi(upnp_error->child_text("errorCode"));
                } catch (...) {
                }
                fault.error_description = upnp_error->child_text("errorDescription");
            }
        }
        return fault;
    }

    std::string expected_name = expected.name + "Response";
    if (first->local_name() != expected_name)
        throw Error(Errc::unexpected_action_name, std::string(first->local_name()));
    ActionSuccess ok;
    ok.action_name = expected.name;
    ok.out_arguments = arguments_from_element(*first);
    return ok;
}

} // namespace dupnp::soap
