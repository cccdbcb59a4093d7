#include "dupnp/bundle.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "dupnp/errors.hpp"
#include "dupnp/url.hpp"
#include "dupnp/util.hpp"

namespace dupnp {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(DocumentKind kind) {
    switch (kind) {
    case DocumentKind::root: return "root";
    case DocumentKind::scpd: return "scpd";
    case DocumentKind::presentation: return "presentation";
    }
    return "presentation";
}

std::optional<DocumentKind> document_kind_from_string(std::string_view s) {
    if (s == "root") return DocumentKind::root;
    if (s == "scpd") return DocumentKind::scpd;
    if (s == "presentation") return DocumentKind::presentation;
    return std::nullopt;
}

const StoredDocument* DeviceBundle::document_by_serve_path(std::string_view serve_path) const {
    for (const auto& doc : documents) {
        if (doc.serve_path == serve_path) return &doc;
    }
    return nullptr;
}

const CuratedService* DeviceBundle::service_by_key(std::string_view key) const {
    for (const auto& svc : services) {
        if (svc.key == key) return &svc;
    }
    return nullptr;
}

const desc::StateVariableDef* DeviceBundle::resolve_snapshot_key(
    std::string_view key, const CuratedService** service) const {
    size_t slash = key.rfind('/');
    if (slash == std::string_view::npos) return nullptr;
    const CuratedService* svc = service_by_key(key.substr(0, slash));
    if (!svc || !svc->scpd) return nullptr;
    if (service) *service = svc;
    return svc->scpd->variable(key.substr(slash + 1));
}

std::string service_key_for_type(const std::string& service_type) {
    // urn:<domain>:service:<name>:<version>
    auto parts = split(service_type, ':');
    if (parts.size() >= 5 && parts[0] == "urn" && parts[2] == "service" && !parts[3].empty())
        return parts[3];
    std::string key;
    for (char c : service_type) key.push_back(c == ':' || c == '/' ? '_' : c);
    return key.empty() ? "service" : key;
}

namespace {

void collect_services(const DeviceBundle& bundle, const desc::DeviceDescription& device,
                      const std::string& base, std::set<std::string>& used_keys,
                      std::vector<CuratedService>& out) {
    for (const auto& ref : device.services) {
        CuratedService svc;
        svc.device_udn = device.udn;
        svc.ref = ref;
        svc.scpd_serve_path = url_path(resolve_url(base, ref.scpd_url));
        svc.control_serve_path = url_path(resolve_url(base, ref.control_url));
        svc.event_serve_path = url_path(resolve_url(base, ref.event_sub_url));

        std::string key = service_key_for_type(ref.service_type);
        std::string candidate = key;
        for (int i = 2; used_keys.count(candidate); ++i)
            candidate = key + "@" + std::to_string(i);
        used_keys.insert(candidate);
        svc.key = std::move(candidate);

        if (const StoredDocument* doc = bundle.document_by_serve_path(svc.scpd_serve_path)) {
            svc.scpd = desc::parse_service_description(doc->bytes);
        }
        out.push_back(std::move(svc));
    }
    for (const auto& embedded : device.embedded_devices)
        collect_services(bundle, embedded, base, used_keys, out);
}

} // namespace

void rebuild_curated(DeviceBundle& bundle) {
    const StoredDocument* root_doc =
        bundle.document_by_serve_path(bundle.manifest.root_serve_path);
    if (!root_doc) throw Error(Errc::bundle_invalid, "missing root document");
    try {
        bundle.root = desc::parse_device_description(root_doc->bytes);
    } catch (const Error& e) {
        throw Error(Errc::bundle_invalid, std::string("root description: ") + e.what());
    }

    // Base for URL resolution: explicit URLBase wins, else the crawl origin,
    // else paths resolve relative to the root document path.
    std::string base = bundle.root.url_base ? *bundle.root.url_base
                       : !bundle.manifest.source_location.empty()
                           ? bundle.manifest.source_location
                           : bundle.manifest.root_serve_path;

    bundle.services.clear();
    std::set<std::string> used_keys;
    collect_services(bundle, bundle.root, base, used_keys, bundle.services);

    bundle.manifest.uuid = bundle.root.udn;
    bundle.manifest.friendly_name = bundle.root.friendly_name;
    bundle.manifest.device_types = bundle.root.all_device_types();
    bundle.manifest.service_types = bundle.root.all_service_types();
}

std::vector<std::string> apply_snapshot_defaults(DeviceBundle& bundle) {
    std::vector<std::string> defaulted;
    for (const auto& svc : bundle.services) {
        if (!svc.scpd) continue;
        for (const auto& var : svc.scpd->state_variables) {
            std::string key = svc.key + "/" + var.name;
            if (bundle.snapshot.count(key)) continue;
            bundle.snapshot[key] = desc::initial_value(var);
            defaulted.push_back(std::move(key));
        }
    }
    return defaulted;
}

std::string serialize_snapshot(const std::map<std::string, std::string>& snapshot) {
    std::string out;
    for (const auto& [key, value] : snapshot) {
        out += key;
        out += '=';
        out += escape_field(value);
        out += '\n';
    }
    return out;
}

std::map<std::string, std::string> parse_snapshot(std::string_view text) {
    std::map<std::string, std::string> out;
    for (const auto& line : split(text, '\n')) {
        if (line.empty() || line.front() == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::manifest_corrupt, "snapshot line without '=': " + line);
        out[line.substr(0, eq)] = unescape_field(line.substr(eq + 1));
    }
    return out;
}

namespace {

constexpr const char* k_bundle_format = "dupnp-bundle/1";

std::string checksum(std::string_view bytes) { return "fnv1a64:" + fnv1a64_hex(bytes); }

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io_failure, "short write to " + path.string());
}

std::string read_file(const std::filesystem::path& path, Errc missing_code) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(missing_code, "cannot read " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

ordered_json manifest_to_json(const DeviceBundle& bundle) {
    ordered_json j;
    j["format"] = k_bundle_format;
    j["uuid"] = bundle.manifest.uuid;
    j["friendly_name"] = bundle.manifest.friendly_name;
    j["scan_timestamp"] = bundle.manifest.scan_timestamp;
    j["source_location"] = bundle.manifest.source_location;
    j["server_header"] = bundle.manifest.server_header;
    j["root_path"] = bundle.manifest.root_serve_path;
    j["device_types"] = bundle.manifest.device_types;
    j["service_types"] = bundle.manifest.service_types;
    ordered_json docs = ordered_json::array();
    for (const auto& doc : bundle.documents) {
        ordered_json d;
        d["url"] = doc.url;
        d["serve_path"] = doc.serve_path;
        d["store_path"] = doc.store_path;
        d["kind"] = std::string(to_string(doc.kind));
        d["content_type"] = doc.content_type;
        d["checksum"] = checksum(doc.bytes);
        docs.push_back(std::move(d));
    }
    j["documents"] = std::move(docs);
    ordered_json failures = ordered_json::array();
    for (const auto& f : bundle.manifest.fetch_failures) {
        failures.push_back(ordered_json{{"url", f.url}, {"error", f.error}});
    }
    j["fetch_failures"] = std::move(failures);
    j["snapshot_checksum"] = checksum(serialize_snapshot(bundle.snapshot));
    return j;
}

const ordered_json& require_key(const ordered_json& j, const char* key) {
    if (!j.contains(key)) throw Error(Errc::manifest_corrupt, std::string("missing key ") + key);
    return j.at(key);
}

void reject_unknown_keys(const ordered_json& j, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key))
            throw Error(Errc::manifest_corrupt, "unknown key " + key + " in " + where);
    }
}

} // namespace

void save_bundle(const DeviceBundle& bundle, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::io_failure, "cannot create " + dir.string());
    for (const auto& doc : bundle.documents) {
        write_file(dir / "documents" / doc.store_path, doc.bytes);
    }
    write_file(dir / "snapshot.txt", serialize_snapshot(bundle.snapshot));
    write_file(dir / "manifest.json", manifest_to_json(bundle).dump(2) + "\n");
}

DeviceBundle load_bundle(const std::filesystem::path& dir) {
    std::string manifest_text = read_file(dir / "manifest.json", Errc::io_failure);
    ordered_json j;
    try {
        j = ordered_json::parse(manifest_text);
    } catch (const std::exception& e) {
        throw Error(Errc::manifest_corrupt, std::string("manifest.json: ") + e.what());
    }
    reject_unknown_keys(j,
                        {"format", "uuid", "friendly_name", "scan_timestamp", "source_location",
                         "server_header", "root_path", "device_types", "service_types",
                         "documents", "fetch_failures", "snapshot_checksum"},
                        "manifest");
    if (require_key(j, "format").get<std::string>() != k_bundle_format)
        throw Error(Errc::manifest_corrupt, "unsupported format " + j["format"].dump());

    DeviceBundle bundle;
    bundle.manifest.uuid = require_key(j, "uuid").get<std::string>();
    bundle.manifest.friendly_name = j.value("friendly_name", "");
    bundle.manifest.scan_timestamp = j.value("scan_timestamp", "");
    bundle.manifest.source_location = j.value("source_location", "");
    bundle.manifest.server_header = j.value("server_header", "");
    bundle.manifest.root_serve_path = require_key(j, "root_path").get<std::string>();
    for (const auto& t : require_key(j, "device_types"))
        bundle.manifest.device_types.push_back(t.get<std::string>());
    for (const auto& t : require_key(j, "service_types"))
        bundle.manifest.service_types.push_back(t.get<std::string>());

    for (const auto& d : require_key(j, "documents")) {
        reject_unknown_keys(d, {"url", "serve_path", "store_path", "kind", "content_type",
                                "checksum"},
                            "documents entry");
        StoredDocument doc;
        doc.url = require_key(d, "url").get<std::string>();
        doc.serve_path = require_key(d, "serve_path").get<std::string>();
        doc.store_path = require_key(d, "store_path").get<std::string>();
        auto kind = document_kind_from_string(require_key(d, "kind").get<std::string>());
        if (!kind) throw Error(Errc::manifest_corrupt, "bad kind for " + doc.serve_path);
        doc.kind = *kind;
        doc.content_type = d.value("content_type", "");
        std::filesystem::path file = dir / "documents" / doc.store_path;
        if (!std::filesystem::exists(file))
            throw Error(Errc::manifest_corrupt, "missing document " + doc.store_path);
        doc.bytes = read_file(file, Errc::manifest_corrupt);
        std::string expected = require_key(d, "checksum").get<std::string>();
        if (checksum(doc.bytes) != expected)
            throw Error(Errc::manifest_corrupt, "checksum mismatch for " + doc.store_path);
        bundle.documents.push_back(std::move(doc));
    }

    if (j.contains("fetch_failures")) {
        for (const auto& f : j["fetch_failures"]) {
            bundle.manifest.fetch_failures.push_back(
                {f.value("url", ""), f.value("error", "")});
        }
    }

    std::string snapshot_text = read_file(dir / "snapshot.txt", Errc::manifest_corrupt);
    if (j.contains("snapshot_checksum") &&
        checksum(snapshot_text) != j["snapshot_checksum"].get<std::string>())
        throw Error(Errc::manifest_corrupt, "checksum mismatch for snapshot.txt");
    bundle.snapshot = parse_snapshot(snapshot_text);

    rebuild_curated(bundle);

    // Every snapshot key must name a declared variable.
    for (const auto& [key, _] : bundle.snapshot) {
        if (!bundle.resolve_snapshot_key(key))
            throw Error(Errc::manifest_corrupt, "snapshot key names no variable: " + key);
    }
    return bundle;
}

void checkpoint_snapshot(const std::filesystem::path& dir,
                         const std::map<std::string, std::string>& snapshot) {
    std::string snapshot_text = serialize_snapshot(snapshot);
    write_file(dir / "snapshot.txt", snapshot_text);
    std::string manifest_text = read_file(dir / "manifest.json", Errc::io_failure);
    ordered_json j;
    try {
        j = ordered_json::parse(manifest_text);
    } catch (const std::exception& e) {
        throw Error(Errc::manifest_corrupt, std::string("manifest.json: ") + e.what());
    }
    j["snapshot_checksum"] = checksum(snapshot_text);
    write_file(dir / "manifest.json", j.dump(2) + "\n");
}

} // namespace dupnp
