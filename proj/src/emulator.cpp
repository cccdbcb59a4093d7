#include "dupnp/emulator.hpp"

#include <algorithm>
#include <thread>

#include "dupnp/errors.hpp"
#include "dupnp/url.hpp"
#include "dupnp/util.hpp"

namespace dupnp {

// ---------------------------------------------------------------------------
// StateStore

void StateStore::init(const DeviceBundle& bundle) {
    std::unique_lock lock(m_mutex);
    m_entries.clear();
    for (const auto& svc : bundle.services) {
        if (!svc.scpd) continue;
        for (const auto& var : svc.scpd->state_variables) {
            std::string key = svc.key + "/" + var.name;
            auto it = bundle.snapshot.find(key);
            std::string value = it != bundle.snapshot.end() ? it->second
                                                            : desc::initial_value(var);
            if (!desc::validate_value(var, value))
                throw Error(Errc::bundle_invalid,
                            "snapshot value for " + key + " violates its definition");
            m_entries[key] = Entry{std::move(value), &var};
        }
    }
}

std::optional<std::string> StateStore::get(const std::string& key) const {
    std::shared_lock lock(m_mutex);
    auto it = m_entries.find(key);
    if (it == m_entries.end()) return std::nullopt;
    return it->second.value;
}

bool StateStore::try_set(const std::string& key, const std::string& value) {
    std::unique_lock lock(m_mutex);
    auto it = m_entries.find(key);
    if (it == m_entries.end()) return false;
    if (!desc::validate_value(*it->second.def, value)) return false;
    it->second.value = value;
    return true;
}

std::map<std::string, std::string> StateStore::snapshot() const {
    std::shared_lock lock(m_mutex);
    std::map<std::string, std::string> out;
    for (const auto& [key, entry] : m_entries) out[key] = entry.value;
    return out;
}

bool StateStore::all_valid() const {
    std::shared_lock lock(m_mutex);
    return std::all_of(m_entries.begin(), m_entries.end(), [](const auto& kv) {
        return desc::validate_value(*kv.second.def, kv.second.value);
    });
}

// ---------------------------------------------------------------------------
// Instance

namespace {

std::string default_server_header() { return "Unspecified, UPnP/1.0, Unspecified"; }

std::string guess_content_type(const std::string& serve_path) {
    auto ends_with = [&](std::string_view suffix) {
        return serve_path.size() >= suffix.size() &&
               iequals(std::string_view(serve_path).substr(serve_path.size() - suffix.size()),
                       suffix);
    };
    if (ends_with(".xml")) return "text/xml";
    if (ends_with(".html") || ends_with(".htm")) return "text/html";
    if (ends_with(".jpg") || ends_with(".jpeg")) return "image/jpeg";
    if (ends_with(".png")) return "image/png";
    if (ends_with(".ico")) return "image/x-icon";
    if (ends_with(".css")) return "text/css";
    if (ends_with(".js")) return "application/javascript";
    return "application/octet-stream";
}

std::string strip_query(const std::string& target) {
    size_t q = target.find('?');
    return q == std::string::npos ? target : target.substr(0, q);
}

} // namespace

std::unique_ptr<Instance> Instance::instantiate(DeviceBundle bundle, InstanceConfig config,
                                                InteractionLog& log) {
    return std::unique_ptr<Instance>(new Instance(std::move(bundle), std::move(config), log));
}

Instance::Instance(DeviceBundle bundle, InstanceConfig config, InteractionLog& log)
    : m_bundle(std::move(bundle)), m_config(std::move(config)), m_log(log) {
    if (m_bundle.services.empty() && m_bundle.documents.empty())
        throw Error(Errc::bundle_invalid, "bundle has no documents");
    if (!m_bundle.document_by_serve_path(m_bundle.manifest.root_serve_path))
        throw Error(Errc::bundle_invalid, "bundle has no root description document");

    m_store.init(m_bundle);

    m_identity.uuid = m_bundle.manifest.uuid;
    if (m_config.uuid_override) {
        m_identity.uuid = *m_config.uuid_override;
    } else if (m_config.uuid_policy == UuidPolicy::randomize) {
        auto rng = seeded_rng(0);
        m_identity.uuid = "uuid:" + random_uuid(rng);
    }
    m_identity.device_types = m_bundle.manifest.device_types;
    m_identity.service_types = m_bundle.manifest.service_types;
    m_identity.http_address = m_config.bind_address;
    m_identity.root_description_path = m_bundle.manifest.root_serve_path;
    m_identity.server_header = m_bundle.manifest.server_header.empty()
                                   ? default_server_header()
                                   : m_bundle.manifest.server_header;

    m_server.set_raw_capture_cap(m_log.raw_capture_cap());
    m_server.set_handler([this](const http::Request& req) { return handle_request(req); });
    m_server.set_malformed_handler([this](const std::string& peer, const std::string& raw) {
        InteractionRecord rec;
        rec.timestamp = std::chrono::system_clock::now();
        rec.instance_uuid = m_identity.uuid;
        rec.layer = Layer::presentation;
        rec.peer = peer;
        rec.summary = "malformed http request";
        rec.raw = raw;
        rec.status = "400";
        rec.outcome = Outcome::rejected;
        m_log.append(std::move(rec));
    });
    if (!m_server.bind(m_config.bind_address, m_config.http_port))
        throw Error(Errc::port_in_use,
                    m_config.bind_address + ":" + std::to_string(m_config.http_port));
    m_server.start();
    m_identity.http_port = m_server.port();

    if (m_config.responder) m_config.responder->add_instance(m_identity);
}

Instance::~Instance() { stop(); }

void Instance::stop() {
    if (m_stopped) return;
    m_stopped = true;
    if (m_config.responder) m_config.responder->remove_instance(m_identity.uuid);
    m_server.stop();
    m_subscriptions.drain();
}

void Instance::checkpoint() {
    if (!m_config.bundle_dir) return;
    checkpoint_snapshot(*m_config.bundle_dir, m_store.snapshot());
}

gena::EventPropertySet Instance::evented_state(const CuratedService& svc) const {
    gena::EventPropertySet set;
    if (!svc.scpd) return set;
    for (const auto& var : svc.scpd->state_variables) {
        if (!var.send_events) continue;
        if (auto value = m_store.get(svc.key + "/" + var.name))
            set.changes.push_back({var.name, *value});
    }
    return set;
}

soap::ActionResult Instance::dispatch_action(const soap::ActionInvocation& inv,
                                             const CuratedService& service) {
    if (!service.scpd || inv.service_type != service.ref.service_type)
        return soap::ActionFault{soap::k_fault_invalid_action, "Invalid Action"};
    const desc::ActionDef* def = service.scpd->action(inv.action_name);
    if (!def) return soap::ActionFault{soap::k_fault_invalid_action, "Invalid Action"};

    auto find_provided = [&](const std::string& name) -> const soap::Argument* {
        for (const auto& arg : inv.arguments) {
            if (arg.name == name) return &arg;
        }
        return nullptr;
    };

    // Validate every in argument before touching the store.
    struct PendingWrite {
        std::string key;
        std::string value;
        const desc::StateVariableDef* var;
    };
    std::vector<PendingWrite> writes;
    size_t declared_in = 0;
    for (const auto& arg : def->arguments) {
        if (arg.direction != desc::Direction::in) continue;
        ++declared_in;
        const soap::Argument* provided = find_provided(arg.name);
        if (!provided) return soap::ActionFault{soap::k_fault_invalid_args, "Invalid Args"};
        const desc::StateVariableDef* var =
            service.scpd->variable(arg.related_state_variable);
        if (!var) return soap::ActionFault{soap::k_fault_action_failed, "Action Failed"};
        if (!desc::validate_value(*var, provided->value))
            return soap::ActionFault{soap::k_fault_invalid_args, "Invalid Args"};
        writes.push_back({service.key + "/" + var->name, provided->value, var});
    }
    if (inv.arguments.size() != declared_in)
        return soap::ActionFault{soap::k_fault_invalid_args, "Invalid Args"};

    // Writes first, then out reporting; events fire in write order while the
    // store lock is held so concurrent writers cannot reorder NOTIFYs.
    gena::EventPropertySet changes;
    {
        std::unique_lock lock(m_store.m_mutex);
        for (const auto& w : writes) {
            auto it = m_store.m_entries.find(w.key);
            if (it == m_store.m_entries.end())
                return soap::ActionFault{soap::k_fault_action_failed, "Action Failed"};
            it->second.value = w.value;
            if (w.var->send_events) changes.changes.push_back({w.var->name, w.value});
        }
        if (!changes.changes.empty()) m_subscriptions.publish(service.key, changes);
    }

    soap::ActionSuccess ok;
    ok.action_name = inv.action_name;
    for (const auto& arg : def->arguments) {
        if (arg.direction != desc::Direction::out) continue;
        auto value = m_store.get(service.key + "/" + arg.related_state_variable);
        if (!value) return soap::ActionFault{soap::k_fault_action_failed, "Action Failed"};
        ok.out_arguments.push_back({arg.name, *value});
    }
    return ok;
}

http::Response Instance::serve_document(const StoredDocument& doc) {
    http::Response res;
    res.status = 200;
    res.set_header("CONTENT-TYPE",
                   doc.content_type.empty() ? guess_content_type(doc.serve_path)
                                            : doc.content_type);
    res.body = doc.bytes;
    return res;
}

http::Response Instance::handle_control(const CuratedService& svc, const http::Request& req,
                                        Outcome& outcome, std::string& status) {
    soap::ActionInvocation inv;
    try {
        inv = soap::parse_action_request(req);
    } catch (const Error&) {
        outcome = Outcome::fault;
        status = "fault 402";
        return soap::build_fault(soap::k_fault_invalid_args, "Invalid Args");
    }
    soap::ActionResult result = dispatch_action(inv, svc);
    if (const auto* fault = std::get_if<soap::ActionFault>(&result)) {
        outcome = Outcome::fault;
        status = "fault " + std::to_string(fault->error_code);
        return soap::build_fault(fault->error_code, fault->error_description);
    }
    const auto& ok = std::get<soap::ActionSuccess>(result);
    outcome = Outcome::served;
    status = "200";
    return soap::build_action_response(inv, ok.out_arguments);
}

http::Response Instance::handle_eventing(const CuratedService& svc, const http::Request& req,
                                         Outcome& outcome, std::string& status) {
    http::Response res;
    try {
        gena::SubscribeRequest sub_req = gena::parse_subscribe_request(req);
        if (sub_req.unsubscribe) {
            m_subscriptions.unsubscribe(sub_req.sid);
            res.status = 200;
        } else if (sub_req.renewal) {
            gena::Subscription sub = m_subscriptions.renew(sub_req.sid, sub_req.timeout_seconds);
            res.status = 200;
            res.set_header("SID", sub.sid);
            res.set_header("TIMEOUT", "Second-" + std::to_string(sub.timeout_seconds));
        } else {
            gena::Subscription sub = m_subscriptions.subscribe(
                svc.key, sub_req.callback_urls, sub_req.timeout_seconds, evented_state(svc));
            res.status = 200;
            res.set_header("SID", sub.sid);
            res.set_header("TIMEOUT", "Second-" + std::to_string(sub.timeout_seconds));
        }
        outcome = Outcome::served;
        status = "200";
    } catch (const Error& e) {
        // Missing CALLBACK and unknown/expired SIDs both answer 412.
        res = http::Response{};
        res.status = 412;
        res.reason = http::reason_for_status(412);
        outcome = Outcome::fault;
        status = "412 " + std::string(to_string(e.code()));
    }
    return res;
}

http::Response Instance::handle_request(const http::Request& req) {
    auto started = std::chrono::steady_clock::now();
    if (m_config.response_delay.count() > 0) std::this_thread::sleep_for(m_config.response_delay);

    std::string path = strip_query(req.target);
    Layer layer = Layer::presentation;
    Outcome outcome = Outcome::rejected;
    std::string status;
    http::Response res;

    const CuratedService* control_svc = nullptr;
    const CuratedService* event_svc = nullptr;
    for (const auto& svc : m_bundle.services) {
        if (svc.control_serve_path == path) control_svc = &svc;
        if (svc.event_serve_path == path) event_svc = &svc;
    }
    const StoredDocument* doc = m_bundle.document_by_serve_path(path);

    if (control_svc && iequals(req.method, "POST")) {
        layer = Layer::control;
        res = handle_control(*control_svc, req, outcome, status);
    } else if (event_svc &&
               (iequals(req.method, "SUBSCRIBE") || iequals(req.method, "UNSUBSCRIBE"))) {
        layer = Layer::eventing;
        res = handle_eventing(*event_svc, req, outcome, status);
    } else if (doc && (iequals(req.method, "GET") || iequals(req.method, "HEAD"))) {
        layer = doc->kind == DocumentKind::presentation ? Layer::presentation
                                                        : Layer::description;
        res = serve_document(*doc);
        outcome = Outcome::served;
        status = "200";
    } else if (control_svc || event_svc || doc) {
        // Known path, wrong method.
        layer = control_svc ? Layer::control
                : event_svc ? Layer::eventing
                : doc->kind == DocumentKind::presentation ? Layer::presentation
                                                          : Layer::description;
        res.status = 405;
        res.reason = http::reason_for_status(405);
        outcome = Outcome::rejected;
        status = "405";
    } else {
        // Unknown-path probes are prime honeypot telemetry.
        layer = Layer::presentation;
        res.status = 404;
        res.reason = http::reason_for_status(404);
        outcome = Outcome::rejected;
        status = "404";
    }

    res.set_header("SERVER", m_identity.server_header);
    log_interaction(req, layer, outcome, status, started);
    return res;
}

void Instance::log_interaction(const http::Request& req, Layer layer, Outcome outcome,
                               const std::string& status,
                               std::chrono::steady_clock::time_point started) {
    InteractionRecord rec;
    rec.timestamp = std::chrono::system_clock::now();
    rec.instance_uuid = m_identity.uuid;
    rec.layer = layer;
    rec.peer = req.peer;
    rec.summary = req.method + " " + req.target;
    rec.raw = req.raw_head;
    rec.status = status;
    rec.latency = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::steady_clock::now() - started);
    rec.outcome = outcome;
    m_log.append(std::move(rec));
}

} // namespace dupnp
