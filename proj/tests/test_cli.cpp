#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <algorithm>
#include <set>

#include <httplib.h>

#include "dupnp/bench.hpp"
#include "dupnp/config.hpp"
#include "dupnp/deployment.hpp"
#include "dupnp/errors.hpp"
#include "dupnp/scanner.hpp"
#include "test_support.hpp"

using namespace dupnp;
using namespace dupnp::testing;

namespace {

std::filesystem::path write_wemo_bundle_dir() {
    auto dir = temp_dir("bundle");
    save_bundle(make_wemo_bundle(), dir);
    return dir;
}

DeploymentConfig loopback_deployment(const std::filesystem::path& bundle_dir, int instances,
                                     const std::filesystem::path& sink) {
    DeploymentConfig config;
    for (int i = 0; i < instances; ++i) {
        InstanceEntry entry;
        entry.bundle_path = bundle_dir.string();
        entry.bind_address = "127.0.0.1";
        entry.http_port = 0;
        entry.uuid_policy = instances > 1 ? UuidPolicy::randomize : UuidPolicy::preserve;
        config.instances.push_back(entry);
    }
    config.ssdp.address = "127.0.0.1";
    config.ssdp.bind_address = "127.0.0.1";
    config.ssdp.port = 0;
    config.log.sink_path = sink.string();
    return config;
}

} // namespace

TEST_CASE("config parsing accepts the documented schema") {
    std::string json = R"({
      "instances": [
        {"bundle_path": "b1", "bind_address": "127.0.0.1", "http_port": 39001,
         "uuid_policy": "preserve"},
        {"bundle_path": "b2", "http_port": 39002, "uuid_policy": "randomize"}
      ],
      "ssdp": {"address": "239.255.255.250", "port": 1900, "advertise": true},
      "log": {"sink_path": "x.log", "raw_capture_cap": 512},
      "checkpoint_interval_seconds": 30
    })";
    auto config = parse_deployment_config(json);
    REQUIRE(config.instances.size() == 2);
    CHECK(config.instances[0].http_port == 39001);
    CHECK(config.instances[1].uuid_policy == UuidPolicy::randomize);
    CHECK(config.ssdp.advertise);
    CHECK(config.log.raw_capture_cap == 512);
    CHECK(config.checkpoint_interval_seconds == 30);

    auto back = parse_deployment_config(serialize_deployment_config(config));
    CHECK(back.instances.size() == 2);
}

TEST_CASE("duplicate endpoints are rejected naming both instances") {
    std::string json = R"({
      "instances": [
        {"bundle_path": "b1", "http_port": 39001},
        {"bundle_path": "b2", "http_port": 39001}
      ]
    })";
    try {
        parse_deployment_config(json);
        FAIL("should throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config_invalid);
        CHECK(e.detail().find("instances[0]") != std::string::npos);
        CHECK(e.detail().find("instances[1]") != std::string::npos);
    }
}

TEST_CASE("unknown config keys are rejected by name") {
    try {
        parse_deployment_config(R"({"instances": [{"bundle_path": "b"}], "surprise": 1})");
        FAIL("should throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config_invalid);
        CHECK(e.detail().find("surprise") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_deployment_config("not json"), Error);
    CHECK_THROWS_AS(parse_deployment_config(R"({"instances": []})"), Error);
    CHECK_THROWS_AS(
        parse_deployment_config(
            R"({"instances": [{"bundle_path": "b", "uuid_policy": "sometimes"}]})"),
        Error);
}

TEST_CASE("deployment runs a 20-instance fleet behind one responder") {
    auto bundle_dir = write_wemo_bundle_dir();
    auto sink = temp_dir("sink") / "interactions.log";
    Deployment deployment(loopback_deployment(bundle_dir, 20, sink));
    deployment.start();

    auto instances = deployment.instances();
    REQUIRE(instances.size() == 20);
    std::set<std::string> uuids;
    std::set<uint16_t> ports;
    for (auto* i : instances) {
        uuids.insert(i->identity().uuid);
        ports.insert(i->port());
        httplib::Client probe("127.0.0.1", i->port());
        auto res = probe.Get("/setup.xml");
        REQUIRE(res);
        CHECK(res->status == 200);
    }
    CHECK(uuids.size() == 20);
    CHECK(ports.size() == 20);

    auto found = discover([&] {
        DiscoverConfig dc;
        dc.address = "127.0.0.1";
        dc.port = deployment.responder().port();
        dc.mx = 1;              // responses are randomly delayed within MX
        dc.timeout_seconds = 1.5;
        return dc;
    }());
    CHECK(found.size() == 20);

    deployment.stop();
    CHECK(std::filesystem::exists(sink));
    std::filesystem::remove_all(bundle_dir);
}

TEST_CASE("deploying the same config twice is byte-identical at the description layer") {
    auto bundle_dir = write_wemo_bundle_dir();
    auto sink_dir = temp_dir("sink2");

    auto capture = [&](int run) {
        DeploymentConfig config =
            loopback_deployment(bundle_dir, 1, sink_dir / ("run" + std::to_string(run)));
        config.instances[0].http_port = 0;
        Deployment deployment(config);
        deployment.start();
        auto* instance = deployment.instances()[0];
        httplib::Client client("127.0.0.1", instance->port());
        std::map<std::string, std::string> docs;
        for (const auto& doc : instance->bundle().documents) {
            auto res = client.Get(doc.serve_path);
            REQUIRE(res);
            docs[doc.serve_path] = res->body;
        }
        deployment.stop();
        return docs;
    };
    CHECK(capture(1) == capture(2));
    std::filesystem::remove_all(bundle_dir);
}

TEST_CASE("bench: degenerate run has min = mean = max and sane accounting") {
    InteractionLog log;
    auto instance = Instance::instantiate(make_wemo_bundle(), {}, log);

    auto target = bench_target_from_description("127.0.0.1", instance->port(), "/setup.xml",
                                                "urn:Belkin:service:basicevent:1#GetBinaryState");
    REQUIRE(target);
    CHECK(target->action_name == "GetBinaryState");

    BenchSpec spec;
    spec.targets = {*target};
    spec.repetitions = 1;
    spec.concurrency = 1;
    spec.warmup = 0;
    BenchReport report = run_bench(spec);
    REQUIRE(report.per_target.size() == 1);
    const auto& t = report.per_target[0];
    CHECK(t.ok == 1);
    CHECK(t.min_ms == doctest::Approx(t.max_ms));
    CHECK(t.min_ms == doctest::Approx(t.mean_ms));
    CHECK(report.max_ms() == t.max_ms);
    instance->stop();
}

TEST_CASE("bench accounting: total latency never exceeds wall time x concurrency") {
    InteractionLog log;
    std::vector<std::unique_ptr<Instance>> fleet;
    std::vector<BenchTarget> targets;
    for (int i = 0; i < 4; ++i) {
        InstanceConfig config;
        config.uuid_policy = UuidPolicy::randomize;
        fleet.push_back(Instance::instantiate(make_wemo_bundle(), std::move(config), log));
        auto target = bench_target_from_description("127.0.0.1", fleet.back()->port(),
                                                    "/setup.xml", "");
        REQUIRE(target);
        targets.push_back(*target);
    }
    BenchSpec spec;
    spec.targets = targets;
    spec.repetitions = 25;
    spec.concurrency = 4;
    spec.warmup = 2;
    BenchReport report = run_bench(spec);
    size_t total_ok = 0;
    for (const auto& t : report.per_target) total_ok += t.ok;
    CHECK(total_ok == 100);
    CHECK(report.sum_latency_ms() <=
          report.wall_ms * static_cast<double>(report.concurrency) * 1.05);

    std::string table = report.to_table();
    CHECK(table.find("max_ms") != std::string::npos);
    CHECK(std::count(table.begin(), table.end(), '\n') == 16); // 4 targets x 4 metrics
    for (auto& i : fleet) i->stop();
}

TEST_CASE("bench reports unreachable targets instead of failing") {
    BenchSpec spec;
    BenchTarget dead;
    dead.host = "127.0.0.1";
    dead.port = 1;
    dead.control_path = "/control/x";
    dead.service_type = "urn:t:service:x:1";
    dead.action_name = "GetX";
    spec.targets = {dead};
    spec.repetitions = 2;
    spec.warmup = 0;
    BenchReport report = run_bench(spec);
    REQUIRE(report.per_target.size() == 1);
    CHECK(report.per_target[0].ok == 0);
    CHECK(report.per_target[0].failed == 2);
}

TEST_CASE("interaction records round-trip through log lines for filtering") {
    InteractionRecord r;
    r.timestamp = std::chrono::system_clock::now();
    r.instance_uuid = "uuid:abc";
    r.layer = Layer::control;
    r.peer = "10.0.0.7:4242";
    r.summary = "POST /control/basicevent1";
    r.raw = std::string("POST /control\r\nbinary\x01\x02");
    r.status = "fault 401";
    r.latency = std::chrono::microseconds(1234);
    r.outcome = Outcome::fault;

    auto parsed = record_from_line(to_line(r));
    REQUIRE(parsed);
    CHECK(parsed->instance_uuid == r.instance_uuid);
    CHECK(parsed->layer == r.layer);
    CHECK(parsed->peer == r.peer);
    CHECK(parsed->summary == r.summary);
    CHECK(parsed->raw == r.raw);
    CHECK(parsed->status == r.status);
    CHECK(parsed->latency == r.latency);
    CHECK(parsed->outcome == r.outcome);
    CHECK(!record_from_line("bogus line").has_value());
}

TEST_CASE("the serve lifecycle flushes records and checkpoints state on stop") {
    auto bundle_dir = write_wemo_bundle_dir();
    auto sink = temp_dir("sink3") / "log.txt";
    DeploymentConfig config = loopback_deployment(bundle_dir, 1, sink);
    Deployment deployment(config);
    deployment.start();

    auto* instance = deployment.instances()[0];
    const CuratedService* svc = instance->bundle().service_by_key("basicevent");
    soap::ActionInvocation inv;
    inv.service_type = svc->ref.service_type;
    inv.action_name = "SetBinaryState";
    inv.arguments.push_back({"BinaryState", "1"});
    instance->dispatch_action(inv, *svc);

    httplib::Client client("127.0.0.1", instance->port());
    REQUIRE(client.Get("/setup.xml"));
    deployment.stop();

    // Checkpoint is readable and reflects the write.
    DeviceBundle resumed = load_bundle(bundle_dir);
    CHECK(resumed.snapshot.at("basicevent/BinaryState") == "1");

    // The sink holds the description fetch.
    std::ifstream in(sink);
    std::string line;
    bool saw_get = false;
    while (std::getline(in, line)) {
        auto rec = record_from_line(line);
        if (rec && rec->summary == "GET /setup.xml") saw_get = true;
    }
    CHECK(saw_get);
    std::filesystem::remove_all(bundle_dir);
}
