#include "dupnp/url.hpp"

#include <cctype>

#include "dupnp/util.hpp"

namespace dupnp {

std::optional<Url> parse_url(std::string_view url) {
    size_t scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) return std::nullopt;
    Url out;
    out.scheme = to_lower(url.substr(0, scheme_end));
    std::string_view rest = url.substr(scheme_end + 3);
    size_t slash = rest.find('/');
    std::string_view authority = slash == std::string_view::npos ? rest : rest.substr(0, slash);
    out.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    size_t colon = authority.rfind(':');
    if (colon == std::string_view::npos) {
        out.host = std::string(authority);
        out.port = out.scheme == "https" ? 443 : 80;
    } else {
        out.host = std::string(authority.substr(0, colon));
        int port = 0;
        for (char c : authority.substr(colon + 1)) {
            if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
            port = port * 10 + (c - '0');
            if (port > 65535) return std::nullopt;
        }
        if (port == 0) return std::nullopt;
        out.port = static_cast<uint16_t>(port);
    }
    if (out.host.empty()) return std::nullopt;
    return out;
}

static std::string normalize_path(const std::string& path) {
    auto segments = split(path, '/');
    std::vector<std::string> stack;
    for (const auto& seg : segments) {
        if (seg.empty() || seg == ".") continue;
        if (seg == "..") {
            if (!stack.empty()) stack.pop_back();
            continue;
        }
        stack.push_back(seg);
    }
    std::string out = "/";
    for (size_t i = 0; i < stack.size(); ++i) {
        out += stack[i];
        if (i + 1 < stack.size()) out += "/";
    }
    if (!path.empty() && path.back() == '/' && out.back() != '/') out += "/";
    return out;
}

std::string resolve_url(const std::string& base, const std::string& ref) {
    if (ref.find("://") != std::string::npos) return ref;
    auto base_url = parse_url(base);
    if (!base_url) {
        // Relative base: resolve path-only.
        if (!ref.empty() && ref.front() == '/') return normalize_path(ref);
        std::string dir = base.substr(0, base.rfind('/') + 1);
        return normalize_path(dir + ref);
    }
    std::string path;
    if (!ref.empty() && ref.front() == '/') {
        path = ref;
    } else {
        std::string base_path = base_url->path.substr(0, base_url->path.rfind('/') + 1);
        path = base_path + ref;
    }
    Url resolved = *base_url;
    resolved.path = normalize_path(path);
    return resolved.to_string();
}

std::string url_path(const std::string& url) {
    if (auto parsed = parse_url(url)) {
        // Strip the query: served documents are keyed by pure path.
        std::string path = parsed->path;
        size_t q = path.find('?');
        if (q != std::string::npos) path = path.substr(0, q);
        return path.empty() ? "/" : path;
    }
    std::string path = url;
    size_t q = path.find('?');
    if (q != std::string::npos) path = path.substr(0, q);
    if (path.empty() || path.front() != '/') path = "/" + path;
    return normalize_path(path);
}

std::string store_path_for(std::string_view serve_path) {
    std::string out;
    out.reserve(serve_path.size());
    size_t start = serve_path.empty() || serve_path.front() != '/' ? 0 : 1;
    for (size_t i = start; i < serve_path.size(); ++i) {
        char c = serve_path[i];
        bool safe = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
                    c == '-' || c == '/';
        out.push_back(safe ? c : '_');
    }
    // Guard against traversal in hostile paths.
    std::string normalized;
    for (const auto& seg : split(out, '/')) {
        if (seg.empty() || seg == "." || seg == "..") continue;
        if (!normalized.empty()) normalized += "/";
        normalized += seg;
    }
    if (normalized.empty()) normalized = "index";
    return normalized;
}

} // namespace dupnp
