#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dupnp {

struct Url {
    std::string scheme; // "http"
    std::string host;
    uint16_t port = 80;
    std::string path = "/"; // includes query, always starts with '/'

    std::string authority() const { return host + ":" + std::to_string(port); }
    std::string to_string() const { return scheme + "://" + authority() + path; }
};

std::optional<Url> parse_url(std::string_view url);

// RFC 3986-lite resolution: absolute refs pass through, "/x" is resolved
// against the base authority, anything else against the base directory.
std::string resolve_url(const std::string& base, const std::string& ref);

// Path component of an absolute URL, or `url` itself (slash-prefixed) when
// it is already relative.
std::string url_path(const std::string& url);

// Filesystem-safe relative path for a serve path ("/setup.xml" → "setup.xml").
std::string store_path_for(std::string_view serve_path);

} // namespace dupnp
