#include <doctest.h>

#include "dupnp/description.hpp"
#include "dupnp/errors.hpp"
#include "test_support.hpp"

using namespace dupnp;
using namespace dupnp::testing;

namespace {

const char* k_minimal_root =
    "<?xml version=\"1.0\"?>"
    "<root xmlns=\"urn:schemas-upnp-org:device-1-0\">"
    "<specVersion><major>1</major><minor>0</minor></specVersion>"
    "<device>"
    "<deviceType>urn:test:device:thing:1</deviceType>"
    "<friendlyName>Thing</friendlyName>"
    "<manufacturer>T</manufacturer>"
    "<modelName>T1</modelName>"
    "<serialNumber>1</serialNumber>"
    "<UDN>uuid:ABC</UDN>"
    "<serviceList><service>"
    "<serviceType>urn:test:service:s:1</serviceType>"
    "<serviceId>urn:test:serviceId:s1</serviceId>"
    "<SCPDURL>/s.xml</SCPDURL>"
    "<controlURL>/control/s</controlURL>"
    "<eventSubURL>/event/s</eventSubURL>"
    "</service></serviceList>"
    "</device></root>";

const char* k_binary_state_scpd =
    "<?xml version=\"1.0\"?>"
    "<scpd xmlns=\"urn:schemas-upnp-org:service-1-0\">"
    "<specVersion><major>1</major><minor>0</minor></specVersion>"
    "<actionList><action><name>GetBinaryState</name><argumentList><argument>"
    "<name>BinaryState</name><direction>out</direction>"
    "<relatedStateVariable>BinaryState</relatedStateVariable>"
    "</argument></argumentList></action></actionList>"
    "<serviceStateTable><stateVariable sendEvents=\"yes\">"
    "<name>BinaryState</name><dataType>boolean</dataType>"
    "</stateVariable></serviceStateTable></scpd>";

} // namespace

TEST_CASE("minimal root description parses") {
    auto d = desc::parse_device_description(k_minimal_root);
    CHECK(d.udn == "uuid:ABC");
    REQUIRE(d.services.size() == 1);
    CHECK(d.services[0].service_id == "urn:test:serviceId:s1");
    CHECK(d.embedded_devices.empty());
}

TEST_CASE("the crawled fixture root lists twelve services") {
    auto d = desc::parse_device_description(slurp(fixture_dir() / "wemo" / "setup.xml"));
    CHECK(d.services.size() == 12);
    CHECK(d.friendly_name == "WeMo Switch");
    CHECK(d.udn == "uuid:Socket-1_0-221517K0101769");
    CHECK(d.presentation_urls == std::vector<std::string>{"/pluginpres.html"});
    CHECK(d.icon_urls() == std::vector<std::string>{"icon.jpg"});
    // Vendor extensions survive as opaque elements.
    bool has_binary_state = false;
    for (const auto& ext : d.extensions)
        if (ext.local_name() == "binaryState") has_binary_state = true;
    CHECK(has_binary_state);
}

TEST_CASE("missing UDN is a schema violation naming the element") {
    std::string broken(k_minimal_root);
    size_t at = broken.find("<UDN>uuid:ABC</UDN>");
    broken.erase(at, std::string("<UDN>uuid:ABC</UDN>").size());
    try {
        desc::parse_device_description(broken);
        FAIL("should throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::schema_violation);
        CHECK(e.detail() == "UDN");
    }
}

TEST_CASE("scpd with GetBinaryState parses to one action and one variable") {
    auto s = desc::parse_service_description(k_binary_state_scpd);
    REQUIRE(s.actions.size() == 1);
    REQUIRE(s.state_variables.size() == 1);
    CHECK(s.actions[0].name == "GetBinaryState");
    CHECK(s.state_variables[0].data_type == desc::DataType::boolean);
    CHECK(s.state_variables[0].send_events);
    CHECK(desc::classify_action(s.actions[0]) == desc::ActionClass::read);
}

TEST_CASE("dangling relatedStateVariable is rejected by name") {
    std::string broken(k_binary_state_scpd);
    size_t at = broken.find("<relatedStateVariable>BinaryState<");
    broken.replace(at, std::string("<relatedStateVariable>BinaryState<").size(),
                   "<relatedStateVariable>Ghost<");
    try {
        desc::parse_service_description(broken);
        FAIL("should throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::schema_violation);
        CHECK(e.detail() == "Ghost");
    }
}

TEST_CASE("verbatim serialization re-serves crawled bytes exactly") {
    std::string original = slurp(fixture_dir() / "wemo" / "setup.xml");
    auto d = desc::parse_device_description(original);
    CHECK(desc::serialize_device_description(d) == original);

    std::string scpd = slurp(fixture_dir() / "wemo" / "eventservice.xml");
    auto s = desc::parse_service_description(scpd);
    CHECK(desc::serialize_service_description(s) == scpd);
}

TEST_CASE("parse . serialize . parse = parse for the fixture documents") {
    std::string original = slurp(fixture_dir() / "wemo" / "setup.xml");
    auto d = desc::parse_device_description(original);
    auto regenerated = desc::serialize_device_description(d, desc::SerializeMode::regenerate);
    auto d2 = desc::parse_device_description(regenerated);
    CHECK(d == d2);

    std::string scpd = slurp(fixture_dir() / "wemo" / "insightservice.xml");
    auto s = desc::parse_service_description(scpd);
    auto s2 = desc::parse_service_description(
        desc::serialize_service_description(s, desc::SerializeMode::regenerate));
    CHECK(s == s2);
}

TEST_CASE("empty service list serializes and re-parses") {
    desc::DeviceDescription d;
    d.device_type = "urn:test:device:bare:1";
    d.udn = "uuid:bare";
    auto xml_bytes = desc::serialize_device_description(d, desc::SerializeMode::regenerate);
    CHECK(xml_bytes.find("serviceList") != std::string::npos);
    auto back = desc::parse_device_description(xml_bytes);
    CHECK(back.services.empty());
    back.raw_source.clear();
    CHECK(back == d);
}

TEST_CASE("serialize rejects invariant violations") {
    desc::DeviceDescription d;
    d.device_type = "urn:test:device:bad:1";
    d.udn = "not-a-uuid";
    CHECK_THROWS_AS(desc::serialize_device_description(d, desc::SerializeMode::regenerate),
                    Error);

    desc::ServiceDescription s;
    desc::ActionDef a;
    a.name = "Dangle";
    a.arguments.push_back({"X", desc::Direction::out, "Missing"});
    s.actions.push_back(a);
    CHECK_THROWS_AS(desc::serialize_service_description(s, desc::SerializeMode::regenerate),
                    Error);
}

TEST_CASE("device description round-trip holds for generated values") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i) {
        auto d = random_device_description(rng);
        auto back = desc::parse_device_description(
            desc::serialize_device_description(d, desc::SerializeMode::regenerate));
        back.raw_source.clear();
        CHECK(back == d);
        if (back != d) break;
    }
}

TEST_CASE("service description round-trip holds for generated values") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 2000; ++i) {
        auto s = random_service_description(rng);
        auto back = desc::parse_service_description(
            desc::serialize_service_description(s, desc::SerializeMode::regenerate));
        back.raw_source.clear();
        CHECK(back == s);
        if (back != s) break;
    }
}

TEST_CASE("classify_action") {
    desc::ActionDef read;
    read.name = "GetX";
    read.arguments.push_back({"X", desc::Direction::out, "X"});
    CHECK(desc::classify_action(read) == desc::ActionClass::read);

    desc::ActionDef write;
    write.name = "SetX";
    write.arguments.push_back({"X", desc::Direction::in, "X"});
    CHECK(desc::classify_action(write) == desc::ActionClass::write);

    desc::ActionDef mixed;
    mixed.name = "Swap";
    mixed.arguments.push_back({"In", desc::Direction::in, "X"});
    mixed.arguments.push_back({"Out", desc::Direction::out, "X"});
    CHECK(desc::classify_action(mixed) == desc::ActionClass::mixed);

    desc::ActionDef empty;
    empty.name = "Ping";
    CHECK(desc::classify_action(empty) == desc::ActionClass::read);
}

TEST_CASE("duplicate names are schema violations") {
    std::string dup_action(k_binary_state_scpd);
    size_t at = dup_action.find("</actionList>");
    std::string action_block = dup_action.substr(dup_action.find("<action>"),
                                                 dup_action.find("</action>") + 9 -
                                                     dup_action.find("<action>"));
    dup_action.insert(at, action_block);
    CHECK_THROWS_AS(desc::parse_service_description(dup_action), Error);
}

TEST_CASE("allowed values and range are mutually exclusive") {
    std::string bad =
        "<scpd><serviceStateTable><stateVariable sendEvents=\"no\">"
        "<name>V</name><dataType>ui1</dataType>"
        "<allowedValueList><allowedValue>1</allowedValue></allowedValueList>"
        "<allowedValueRange><minimum>0</minimum><maximum>9</maximum></allowedValueRange>"
        "</stateVariable></serviceStateTable></scpd>";
    CHECK_THROWS_AS(desc::parse_service_description(bad), Error);
}

TEST_CASE("unrecognized data types are tolerated as opaque strings") {
    std::string odd =
        "<scpd><serviceStateTable><stateVariable sendEvents=\"no\">"
        "<name>V</name><dataType>vendor.blob</dataType>"
        "</stateVariable></serviceStateTable></scpd>";
    auto s = desc::parse_service_description(odd);
    REQUIRE(s.state_variables.size() == 1);
    CHECK(s.state_variables[0].data_type == desc::DataType::opaque);
    CHECK(s.state_variables[0].data_type_text == "vendor.blob");
    CHECK(desc::validate_value(s.state_variables[0], "anything at all"));
}

TEST_CASE("value validation per data type") {
    using desc::DataType;
    auto var = [](DataType t) { return make_variable("V", t); };

    CHECK(desc::validate_value(var(DataType::boolean), "1"));
    CHECK(desc::validate_value(var(DataType::boolean), "no"));
    CHECK(!desc::validate_value(var(DataType::boolean), "7"));

    CHECK(desc::validate_value(var(DataType::i1), "-128"));
    CHECK(!desc::validate_value(var(DataType::i1), "128"));
    CHECK(desc::validate_value(var(DataType::ui4), "4294967295"));
    CHECK(!desc::validate_value(var(DataType::ui4), "4294967296"));
    CHECK(!desc::validate_value(var(DataType::i4), "12x"));

    CHECK(desc::validate_value(var(DataType::r8), "-1.25e3"));
    CHECK(!desc::validate_value(var(DataType::r8), "one"));

    CHECK(desc::validate_value(var(DataType::date_time), "2024-02-29T12:30:00"));
    CHECK(desc::validate_value(var(DataType::date_time), "2024-02-29"));
    CHECK(!desc::validate_value(var(DataType::date_time), "not-a-date"));

    CHECK(desc::validate_value(var(DataType::bin_base64), "SGVsbG8="));
    CHECK(!desc::validate_value(var(DataType::bin_base64), "###!"));

    CHECK(desc::validate_value(var(DataType::string_), "anything <>"));
    CHECK(desc::validate_value(var(DataType::uri), ""));
}

TEST_CASE("allowed list, range and step constrain values") {
    auto v = make_variable("Mode", desc::DataType::string_);
    v.allowed_values = {"a", "b"};
    CHECK(desc::validate_value(v, "a"));
    CHECK(!desc::validate_value(v, "c"));

    auto r = make_variable("Level", desc::DataType::ui1);
    r.allowed_range = desc::AllowedRange{"0", "100", "5"};
    CHECK(desc::validate_value(r, "95"));
    CHECK(!desc::validate_value(r, "101"));
    CHECK(!desc::validate_value(r, "7")); // off-step
}

TEST_CASE("initial value chain: default, first allowed, range minimum, zero") {
    auto with_default = make_variable("A", desc::DataType::ui2, false, "9");
    CHECK(desc::initial_value(with_default) == "9");

    auto with_allowed = make_variable("B", desc::DataType::string_);
    with_allowed.allowed_values = {"x", "y"};
    CHECK(desc::initial_value(with_allowed) == "x");

    auto with_range = make_variable("C", desc::DataType::i2);
    with_range.allowed_range = desc::AllowedRange{"5", "10", ""};
    CHECK(desc::initial_value(with_range) == "5");

    CHECK(desc::initial_value(make_variable("D", desc::DataType::boolean)) == "false");
    CHECK(desc::initial_value(make_variable("E", desc::DataType::r4)) == "0");
    CHECK(desc::initial_value(make_variable("F", desc::DataType::string_)).empty());
    // Every initial value must validate against its own definition.
    for (auto t : {desc::DataType::string_, desc::DataType::boolean, desc::DataType::i1,
                   desc::DataType::ui4, desc::DataType::r8, desc::DataType::date_time,
                   desc::DataType::bin_base64, desc::DataType::uri}) {
        auto v = make_variable("Z", t);
        CHECK(desc::validate_value(v, desc::initial_value(v)));
    }
}
