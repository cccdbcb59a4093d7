#include <doctest.h>

#include <httplib.h>

#include "dupnp/emulator.hpp"
#include "dupnp/errors.hpp"
#include "test_support.hpp"

using namespace dupnp;
using namespace dupnp::testing;

namespace {

struct LiveInstance {
    InteractionLog log;
    std::unique_ptr<Instance> instance;
    std::vector<InteractionRecord> records;
    std::mutex mutex;

    explicit LiveInstance(DeviceBundle bundle, InstanceConfig config = {}) {
        log.set_callback([this](const InteractionRecord& r) {
            std::lock_guard lock(mutex);
            records.push_back(r);
        });
        instance = Instance::instantiate(std::move(bundle), std::move(config), log);
    }

    httplib::Client client() {
        httplib::Client c("127.0.0.1", instance->port());
        c.set_connection_timeout(5, 0);
        c.set_read_timeout(5, 0);
        return c;
    }

    std::vector<InteractionRecord> drained_records() {
        log.flush();
        std::lock_guard lock(mutex);
        return records;
    }

    soap::ActionResult invoke(const std::string& service_key, const std::string& action,
                              std::vector<soap::Argument> args = {}) {
        const CuratedService* svc = instance->bundle().service_by_key(service_key);
        REQUIRE(svc);
        soap::ActionInvocation inv;
        inv.service_type = svc->ref.service_type;
        inv.action_name = action;
        inv.arguments = std::move(args);
        return instance->dispatch_action(inv, *svc);
    }
};

std::string out_value(const soap::ActionResult& result) {
    auto* ok = std::get_if<soap::ActionSuccess>(&result);
    REQUIRE(ok);
    REQUIRE(!ok->out_arguments.empty());
    return ok->out_arguments[0].value;
}

int fault_code(const soap::ActionResult& result) {
    auto* fault = std::get_if<soap::ActionFault>(&result);
    REQUIRE(fault);
    return fault->error_code;
}

} // namespace

TEST_CASE("instantiate serves every crawled document byte-verbatim") {
    LiveInstance live(make_wemo_bundle());
    auto client = live.client();
    for (const auto& doc : live.instance->bundle().documents) {
        auto res = client.Get(doc.serve_path);
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->body == doc.bytes);
    }
    // The mirrored Server header, not the framework's.
    auto res = client.Get("/setup.xml");
    REQUIRE(res);
    CHECK(res->get_header_value("Server") == "Unspecified, UPnP/1.0, Unspecified");
}

TEST_CASE("two instances cannot share a port") {
    InteractionLog log;
    auto first = Instance::instantiate(make_wemo_bundle(), {}, log);
    InstanceConfig clash;
    clash.http_port = first->port();
    try {
        Instance::instantiate(make_wemo_bundle(), std::move(clash), log);
        FAIL("should throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::port_in_use);
    }
}

TEST_CASE("a bundle without its root document is invalid") {
    DeviceBundle bundle = make_wemo_bundle();
    bundle.manifest.root_serve_path = "/not-there.xml";
    InteractionLog log;
    try {
        Instance::instantiate(std::move(bundle), {}, log);
        FAIL("should throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::bundle_invalid);
    }
}

TEST_CASE("write then read through dispatch_action") {
    LiveInstance live(make_wemo_bundle());
    CHECK(out_value(live.invoke("basicevent", "GetBinaryState")) == "0");
    auto set = live.invoke("basicevent", "SetBinaryState", {{"BinaryState", "1"}});
    CHECK(std::holds_alternative<soap::ActionSuccess>(set));
    CHECK(out_value(live.invoke("basicevent", "GetBinaryState")) == "1");
}

TEST_CASE("unknown action faults 401") {
    LiveInstance live(make_wemo_bundle());
    CHECK(fault_code(live.invoke("basicevent", "FrobnicateState")) == 401);
}

TEST_CASE("invalid argument values fault 402 and leave the store unchanged") {
    LiveInstance live(make_wemo_bundle());
    auto before = live.instance->state().snapshot();
    CHECK(fault_code(live.invoke("basicevent", "SetBinaryState", {{"BinaryState", "7"}})) ==
          402);
    CHECK(fault_code(live.invoke("basicevent", "SetBinaryState", {})) == 402); // missing arg
    CHECK(fault_code(live.invoke("basicevent", "SetBinaryState",
                                 {{"BinaryState", "1"}, {"Extra", "x"}})) == 402);
    CHECK(live.instance->state().snapshot() == before);
}

TEST_CASE("write-then-read coherence across every data type") {
    LiveInstance live(make_synthetic_bundle_a());
    std::mt19937_64 rng(31);
    for (const auto& svc : live.instance->bundle().services) {
        for (const auto& var : svc.scpd->state_variables) {
            for (int i = 0; i < 50; ++i) {
                std::string value = random_valid_value(var, rng);
                auto set = live.invoke(svc.key, "Set" + var.name, {{var.name, value}});
                CHECK(std::holds_alternative<soap::ActionSuccess>(set));
                CHECK(out_value(live.invoke(svc.key, "Get" + var.name)) == value);
            }
        }
    }
    CHECK(live.instance->state().all_valid());
}

TEST_CASE("mixed actions write first, then report") {
    LiveInstance live(make_synthetic_bundle_b());
    auto result = live.invoke("screen", "SwitchInput", {{"Input", "hdmi1"}});
    auto* ok = std::get_if<soap::ActionSuccess>(&result);
    REQUIRE(ok);
    REQUIRE(ok->out_arguments.size() == 1);
    CHECK(ok->out_arguments[0].name == "Standby");
    CHECK(out_value(live.invoke("screen", "GetInput")) == "hdmi1");
}

TEST_CASE("constraint fuzzing never corrupts the store") {
    LiveInstance live(make_synthetic_bundle_a());
    std::mt19937_64 rng(37);
    auto services = live.instance->bundle().services;
    for (int i = 0; i < 500; ++i) {
        const auto& svc = services[rng() % services.size()];
        const auto& var =
            svc.scpd->state_variables[rng() % svc.scpd->state_variables.size()];
        auto invalid = random_invalid_value(var, rng);
        if (!invalid) continue;
        int code = fault_code(live.invoke(svc.key, "Set" + var.name, {{var.name, *invalid}}));
        CHECK((code == 401 || code == 402));
    }
    CHECK(live.instance->state().all_valid());
}

TEST_CASE("control over HTTP, including faults, and telemetry outcomes") {
    LiveInstance live(make_wemo_bundle());
    auto client = live.client();
    const CuratedService* svc = live.instance->bundle().service_by_key("basicevent");

    soap::ActionInvocation set;
    set.service_type = svc->ref.service_type;
    set.action_name = "SetBinaryState";
    set.arguments.push_back({"BinaryState", "1"});
    auto req = soap::build_action_request(set, svc->control_serve_path, "h");
    auto res = client.Post(svc->control_serve_path, req.body, soap::k_content_type);
    // Without the SOAPACTION header this is not a valid control call.
    REQUIRE(res);
    CHECK(res->status == 500);

    httplib::Headers headers{{"SOAPACTION", set.soap_action()}};
    res = client.Post(svc->control_serve_path, headers, req.body, soap::k_content_type);
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body.find("SetBinaryStateResponse") != std::string::npos);

    auto records = live.drained_records();
    REQUIRE(records.size() == 2);
    CHECK(records[0].layer == Layer::control);
    CHECK(records[0].outcome == Outcome::fault);
    CHECK(records[1].outcome == Outcome::served);
}

TEST_CASE("presentation: unknown paths 404 and are logged as rejected probes") {
    LiveInstance live(make_wemo_bundle());
    auto client = live.client();
    auto res = client.Get("/nonexistent");
    REQUIRE(res);
    CHECK(res->status == 404);
    auto records = live.drained_records();
    REQUIRE(records.size() == 1);
    CHECK(records[0].layer == Layer::presentation);
    CHECK(records[0].outcome == Outcome::rejected);
    CHECK(records[0].summary == "GET /nonexistent");
}

TEST_CASE("HEAD returns the same headers with an empty body") {
    LiveInstance live(make_wemo_bundle());
    auto client = live.client();
    auto get = client.Get("/pluginpres.html");
    auto head = client.Head("/pluginpres.html");
    REQUIRE(get);
    REQUIRE(head);
    CHECK(head->status == 200);
    CHECK(head->body.empty());
    CHECK(head->get_header_value("Content-Type") == get->get_header_value("Content-Type"));
    CHECK(head->get_header_value("Content-Length") ==
          std::to_string(get->body.size()));
}

TEST_CASE("eventing over HTTP: subscribe, notify on write, unsubscribe") {
    LiveInstance live(make_wemo_bundle());

    // Callback listener collecting NOTIFY requests.
    http::Server callback_server;
    std::vector<gena::NotifyMessage> notifies;
    std::mutex mutex;
    callback_server.set_handler([&](const http::Request& req) {
        std::lock_guard lock(mutex);
        notifies.push_back(gena::parse_notify(http::serialize_request(req)));
        return http::Response{};
    });
    REQUIRE(callback_server.bind("127.0.0.1", 0));
    callback_server.start();

    const CuratedService* svc = live.instance->bundle().service_by_key("basicevent");
    std::string callback =
        "http://127.0.0.1:" + std::to_string(callback_server.port()) + "/cb";

    http::Request sub_req;
    sub_req.method = "SUBSCRIBE";
    sub_req.target = svc->event_serve_path;
    sub_req.set_header("HOST", "h");
    sub_req.set_header("NT", "upnp:event");
    sub_req.set_header("CALLBACK", "<" + callback + ">");
    sub_req.set_header("TIMEOUT", "Second-1800");
    auto sub_res = http::exchange_raw("127.0.0.1", live.instance->port(),
                                      http::serialize_request(sub_req));
    REQUIRE(sub_res);
    CHECK(sub_res->status == 200);
    std::string sid = sub_res->header_or("SID");
    CHECK(sid.rfind("uuid:", 0) == 0);
    CHECK(sub_res->header_or("TIMEOUT") == "Second-1800");

    // Initial notify (seq 0) carries all evented variables of the service.
    REQUIRE(wait_until([&] {
        std::lock_guard lock(mutex);
        return notifies.size() == 1;
    }));
    {
        std::lock_guard lock(mutex);
        CHECK(notifies[0].seq == 0);
        CHECK(notifies[0].sid == sid);
        REQUIRE(notifies[0].changes.changes.size() == 1); // BinaryState only
        CHECK(notifies[0].changes.changes[0].variable_name == "BinaryState");
        CHECK(notifies[0].changes.changes[0].new_value == "0");
    }

    live.invoke("basicevent", "SetBinaryState", {{"BinaryState", "1"}});
    REQUIRE(wait_until([&] {
        std::lock_guard lock(mutex);
        return notifies.size() == 2;
    }));
    {
        std::lock_guard lock(mutex);
        CHECK(notifies[1].seq == 1);
        CHECK(notifies[1].changes.changes[0].new_value == "1");
    }

    // Non-evented writes never notify.
    live.invoke("timesync", "TimeSync", {{"UTC", "123"}, {"TimeZone", "-5.0"}});
    live.instance->subscriptions().drain();
    {
        std::lock_guard lock(mutex);
        CHECK(notifies.size() == 2);
    }

    http::Request unsub;
    unsub.method = "UNSUBSCRIBE";
    unsub.target = svc->event_serve_path;
    unsub.set_header("HOST", "h");
    unsub.set_header("SID", sid);
    auto unsub_res = http::exchange_raw("127.0.0.1", live.instance->port(),
                                        http::serialize_request(unsub));
    REQUIRE(unsub_res);
    CHECK(unsub_res->status == 200);

    // Bogus SID answers 412.
    unsub.headers.clear();
    unsub.set_header("HOST", "h");
    unsub.set_header("SID", "uuid:bogus");
    auto bogus = http::exchange_raw("127.0.0.1", live.instance->port(),
                                    http::serialize_request(unsub));
    REQUIRE(bogus);
    CHECK(bogus->status == 412);

    callback_server.stop();
}

TEST_CASE("notifies arrive in write order") {
    LiveInstance live(make_wemo_bundle());
    std::vector<std::string> values;
    std::mutex mutex;
    live.instance->subscriptions().set_send_hook(
        [&](const std::string&, const std::string& bytes) {
            auto msg = gena::parse_notify(bytes);
            std::lock_guard lock(mutex);
            values.push_back(msg.changes.changes[0].new_value);
            return true;
        });
    live.instance->subscriptions().subscribe("basicevent", {"http://127.0.0.1:1/cb"}, 1800,
                                             gena::EventPropertySet{{{"BinaryState", "0"}}});
    for (int i = 0; i < 20; ++i) {
        live.invoke("basicevent", "SetBinaryState",
                    {{"BinaryState", i % 2 ? "1" : "0"}});
    }
    live.instance->subscriptions().drain();
    std::lock_guard lock(mutex);
    REQUIRE(values.size() == 21);
    for (size_t i = 1; i < values.size(); ++i) {
        CHECK(values[i] == ((i - 1) % 2 ? "1" : "0"));
    }
}

TEST_CASE("dead subscribers do not block the notifier") {
    LiveInstance live(make_wemo_bundle());
    // Nothing listens on this port; connect fails fast on loopback.
    live.instance->subscriptions().subscribe("basicevent", {"http://127.0.0.1:1/dead"}, 1800,
                                             gena::EventPropertySet{{{"BinaryState", "0"}}});
    auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 5; ++i)
        live.invoke("basicevent", "SetBinaryState", {{"BinaryState", "1"}});
    live.instance->subscriptions().drain();
    auto elapsed = std::chrono::steady_clock::now() - start;
    CHECK(std::chrono::duration_cast<std::chrono::seconds>(elapsed).count() < 5);
    CHECK(live.instance->subscriptions().failed() == 6);
}

TEST_CASE("state checkpoint persists through the bundle directory") {
    DeviceBundle bundle = make_wemo_bundle();
    auto dir = temp_dir("ckpt");
    save_bundle(bundle, dir);

    InteractionLog log;
    InstanceConfig config;
    config.bundle_dir = dir;
    auto instance = Instance::instantiate(load_bundle(dir), std::move(config), log);
    const CuratedService* svc = instance->bundle().service_by_key("basicevent");
    soap::ActionInvocation inv;
    inv.service_type = svc->ref.service_type;
    inv.action_name = "SetBinaryState";
    inv.arguments.push_back({"BinaryState", "1"});
    instance->dispatch_action(inv, *svc);
    instance->checkpoint();
    instance->stop();

    DeviceBundle resumed = load_bundle(dir);
    CHECK(resumed.snapshot.at("basicevent/BinaryState") == "1");
    std::filesystem::remove_all(dir);
}

TEST_CASE("log sink drops beyond its queue and counts every record") {
    InteractionLog log(LogConfig{"", 64, 16});
    // Stall the writer so the queue can actually fill.
    std::atomic<bool> release{false};
    log.set_callback([&](const InteractionRecord&) {
        while (!release.load()) std::this_thread::sleep_for(std::chrono::microseconds(50));
    });
    InteractionRecord record;
    record.instance_uuid = "uuid:x";
    record.summary = "probe";
    const int total = 10000;
    for (int i = 0; i < total; ++i) log.append(record);
    release = true;
    log.flush();
    CHECK(log.appended() == total);
    CHECK(log.dropped() > 0);
    CHECK(log.written() + log.dropped() == total);
}

TEST_CASE("uuid policies") {
    DeviceBundle bundle = make_wemo_bundle();
    InteractionLog log;
    auto preserved = Instance::instantiate(bundle, {}, log);
    CHECK(preserved->identity().uuid == bundle.manifest.uuid);

    InstanceConfig randomize;
    randomize.uuid_policy = UuidPolicy::randomize;
    auto randomized = Instance::instantiate(bundle, std::move(randomize), log);
    CHECK(randomized->identity().uuid != bundle.manifest.uuid);
    CHECK(randomized->identity().uuid.rfind("uuid:", 0) == 0);
    // Documents still serve verbatim under a randomized identity.
    httplib::Client c("127.0.0.1", randomized->port());
    auto res = c.Get("/setup.xml");
    REQUIRE(res);
    CHECK(res->body == bundle.document_by_serve_path("/setup.xml")->bytes);
}
