#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "dupnp/errors.hpp"
#include "dupnp/http.hpp"
#include "dupnp/url.hpp"
#include "dupnp/util.hpp"
#include "dupnp/xml.hpp"
#include "test_support.hpp"

using namespace dupnp;

TEST_CASE("string helpers") {
    CHECK(to_lower("AbC-1") == "abc-1");
    CHECK(iequals("Content-Length", "content-length"));
    CHECK(!iequals("abc", "abcd"));
    CHECK(trim("  x y \r\n") == "x y");
    CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
}

TEST_CASE("field escaping survives arbitrary bytes") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 2000; ++i) {
        std::string raw;
        size_t len = rng() % 64;
        for (size_t j = 0; j < len; ++j) raw.push_back(static_cast<char>(rng() % 256));
        std::string escaped = escape_field(raw);
        CHECK(escaped.find('\t') == std::string::npos);
        CHECK(escaped.find('\n') == std::string::npos);
        CHECK(unescape_field(escaped) == raw);
    }
}

TEST_CASE("iso8601 round-trip") {
    auto now = std::chrono::system_clock::now();
    auto parsed = parse_iso8601(iso8601_utc(now));
    REQUIRE(parsed.has_value());
    auto delta = std::chrono::duration_cast<std::chrono::microseconds>(*parsed - now).count();
    CHECK(std::abs(delta) <= 1);
    CHECK(!parse_iso8601("not a date").has_value());
}

TEST_CASE("fnv1a64 is stable") {
    CHECK(fnv1a64_hex("") == "cbf29ce484222325");
    CHECK(fnv1a64_hex("a") != fnv1a64_hex("b"));
}

TEST_CASE("url parsing and resolution") {
    auto u = parse_url("http://10.0.0.11:49153/setup.xml");
    REQUIRE(u.has_value());
    CHECK(u->host == "10.0.0.11");
    CHECK(u->port == 49153);
    CHECK(u->path == "/setup.xml");

    CHECK(resolve_url("http://h:80/a/b.xml", "c.xml") == "http://h:80/a/c.xml");
    CHECK(resolve_url("http://h:80/a/b.xml", "/c.xml") == "http://h:80/c.xml");
    CHECK(resolve_url("http://h:80/a/b.xml", "http://x:1/y") == "http://x:1/y");
    CHECK(resolve_url("http://h:80/a/b.xml", "../up.xml") == "http://h:80/up.xml");
    CHECK(url_path("http://h:9/x/y.xml?q=1") == "/x/y.xml");
    CHECK(url_path("icon.jpg") == "/icon.jpg");
    CHECK(store_path_for("/a/b c.xml") == "a/b_c.xml");
    CHECK(store_path_for("/../../etc/passwd") == "etc/passwd");
    CHECK(store_path_for("/") == "index");
}

TEST_CASE("xml escape round-trip") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 5000; ++i) {
        std::string text = dupnp::testing::random_hostile_text(rng, 40);
        CHECK(xml::unescape(xml::escape(text)) == text);
    }
}

TEST_CASE("xml parse basics") {
    auto root = xml::parse("<?xml version=\"1.0\"?>\n"
                           "<!-- c -->\n"
                           "<a x=\"1&amp;2\"><b>text &lt;here&gt;</b><c/>"
                           "<d><![CDATA[<raw>&]]></d></a>");
    CHECK(root.name == "a");
    REQUIRE(root.attribute("x"));
    CHECK(*root.attribute("x") == "1&2");
    CHECK(root.child_text("b") == "text <here>");
    CHECK(root.child("c") != nullptr);
    CHECK(root.child_text("d") == "<raw>&");
}

TEST_CASE("xml parse rejects malformed input") {
    CHECK_THROWS_AS(xml::parse("<a><b></a>"), Error);
    CHECK_THROWS_AS(xml::parse("<a"), Error);
    CHECK_THROWS_AS(xml::parse("no markup"), Error);
    CHECK_THROWS_AS(xml::parse("<a></a><b></b>"), Error);
    try {
        xml::parse("<a><b></c></a>");
        FAIL("should throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::xml_syntax);
    }
}

TEST_CASE("xml namespace resolution on the element") {
    auto root = xml::parse("<u:Act xmlns:u=\"urn:svc:1\"><X>1</X></u:Act>");
    CHECK(root.local_name() == "Act");
    CHECK(root.own_namespace() == "urn:svc:1");
    auto plain = xml::parse("<Act xmlns=\"urn:svc:2\"/>");
    CHECK(plain.own_namespace() == "urn:svc:2");
}

TEST_CASE("xml structural equality ignores attribute order and whitespace") {
    auto a = xml::parse("<r a=\"1\" b=\"2\"><x>v</x></r>");
    auto b = xml::parse("<r b=\"2\" a=\"1\">\n  <x>v</x>\n</r>");
    CHECK(xml::structurally_equal(a, b));
    auto c = xml::parse("<r a=\"1\" b=\"2\"><x>w</x></r>");
    CHECK(!xml::structurally_equal(a, c));
}

TEST_CASE("xml serialize then parse preserves structure") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 500; ++i) {
        xml::Element e;
        e.name = dupnp::testing::random_identifier(rng);
        e.attributes.emplace_back("k", dupnp::testing::random_hostile_text(rng));
        xml::Element child;
        child.name = dupnp::testing::random_identifier(rng);
        child.text = dupnp::testing::random_hostile_text(rng);
        e.children.push_back(child);
        auto back = xml::parse(xml::serialize(e));
        CHECK(xml::structurally_equal(e, back));
    }
}

TEST_CASE("http request codec") {
    http::Request req;
    req.method = "POST";
    req.target = "/control/x";
    req.set_header("HOST", "h:1");
    req.set_header("SOAPACTION", "\"urn:a:service:b:1#Act\"");
    req.body = "<xml/>";
    auto bytes = http::serialize_request(req);
    auto back = http::parse_request(bytes);
    CHECK(back.method == "POST");
    CHECK(back.target == "/control/x");
    CHECK(back.header_or("soapaction") == "\"urn:a:service:b:1#Act\"");
    CHECK(back.header_or("Content-Length") == "6");
    CHECK(back.body == "<xml/>");
}

TEST_CASE("http response codec") {
    http::Response res;
    res.status = 412;
    res.reason = "Precondition Failed";
    res.set_header("SID", "uuid:x");
    auto back = http::parse_response(http::serialize_response(res));
    CHECK(back.status == 412);
    CHECK(back.header_or("sid") == "uuid:x");
    CHECK_THROWS_AS(http::parse_request("garbage"), Error);
}

TEST_CASE("http server serves, supports HEAD and custom methods") {
    http::Server server;
    server.set_handler([](const http::Request& req) {
        http::Response res;
        if (req.method == "SUBSCRIBE") {
            res.set_header("SID", "uuid:test-sid");
            return res;
        }
        res.body = "hello " + req.method;
        res.set_header("Content-Type", "text/plain");
        return res;
    });
    REQUIRE(server.bind("127.0.0.1", 0));
    server.start();

    std::string host = "127.0.0.1";
    auto get = http::exchange_raw(host, server.port(), "GET /x HTTP/1.1\r\nHOST: h\r\n\r\n");
    REQUIRE(get.has_value());
    CHECK(get->status == 200);
    CHECK(get->body == "hello GET");

    auto head = http::exchange_raw(host, server.port(), "HEAD /x HTTP/1.1\r\nHOST: h\r\n\r\n");
    REQUIRE(head.has_value());
    CHECK(head->body.empty());
    CHECK(head->header_or("Content-Length") == "10"); // "hello HEAD"

    auto sub = http::exchange_raw(
        host, server.port(),
        "SUBSCRIBE /event HTTP/1.1\r\nHOST: h\r\nNT: upnp:event\r\nCALLBACK: <http://x/>\r\n\r\n");
    REQUIRE(sub.has_value());
    CHECK(sub->header_or("SID") == "uuid:test-sid");

    server.stop();
}

TEST_CASE("http server sheds connections beyond its cap") {
    http::Server server;
    server.set_max_connections(2);
    server.set_handler([](const http::Request&) {
        http::Response res;
        res.body = "ok";
        return res;
    });
    REQUIRE(server.bind("127.0.0.1", 0));
    server.start();

    auto open_idle = [&] {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(server.port());
        ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
        return fd;
    };
    int a = open_idle();
    int b = open_idle();
    // Give the accept loop a moment to register both.
    REQUIRE(dupnp::testing::wait_until([&] {
        auto res = http::exchange_raw("127.0.0.1", server.port(),
                                      "GET / HTTP/1.1\r\nHOST: h\r\n\r\n", 500);
        return !res.has_value(); // third connection is shed
    }));

    ::close(a);
    // A slot frees up once the idle connection goes away.
    REQUIRE(dupnp::testing::wait_until([&] {
        auto res = http::exchange_raw("127.0.0.1", server.port(),
                                      "GET / HTTP/1.1\r\nHOST: h\r\n\r\n", 500);
        return res.has_value() && res->body == "ok";
    }));
    ::close(b);
    server.stop();
}

TEST_CASE("http server reports malformed requests") {
    http::Server server;
    std::atomic<int> malformed{0};
    server.set_handler([](const http::Request&) { return http::Response{}; });
    server.set_malformed_handler(
        [&](const std::string&, const std::string&) { malformed.fetch_add(1); });
    REQUIRE(server.bind("127.0.0.1", 0));
    server.start();
    auto res = http::exchange_raw("127.0.0.1", server.port(), "NOT-HTTP\r\n\r\n");
    REQUIRE(res.has_value());
    CHECK(res->status == 400);
    CHECK(malformed.load() == 1);
    server.stop();
}
