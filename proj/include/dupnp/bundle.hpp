#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dupnp/description.hpp"

namespace dupnp {

enum class DocumentKind { root, scpd, presentation };

std::string_view to_string(DocumentKind kind);
std::optional<DocumentKind> document_kind_from_string(std::string_view s);

struct StoredDocument {
    std::string url;        // crawl URL (absolute or relative, as seen)
    std::string serve_path; // path component, starts with '/'
    std::string store_path; // relative path under documents/
    DocumentKind kind = DocumentKind::presentation;
    std::string content_type;
    std::string bytes;
};

struct FetchFailure {
    std::string url;
    std::string error;
};

struct BundleManifest {
    std::string uuid; // "uuid:"-prefixed root UDN
    std::string friendly_name;
    std::string scan_timestamp; // ISO 8601
    std::string source_location;
    std::string server_header;
    std::string root_serve_path;
    std::vector<std::string> device_types;
    std::vector<std::string> service_types;
    std::vector<FetchFailure> fetch_failures;
};

// One service of the bundle, flattened across embedded devices. `key`
// qualifies snapshot entries ("basicevent/BinaryState"); it is derived from
// the service type URN and deduplicated in document order.
struct CuratedService {
    std::string device_udn;
    desc::ServiceRef ref;
    std::string key;
    std::string scpd_serve_path;
    std::string control_serve_path;
    std::string event_serve_path;
    std::optional<desc::ServiceDescription> scpd; // absent when the fetch failed

    bool operator==(const CuratedService& other) const {
        return device_udn == other.device_udn && ref == other.ref && key == other.key &&
               scpd == other.scpd;
    }
};

// Self-contained clone of one device: every crawled document byte-exact,
// the parsed curated list, and a state snapshot. The emulator needs nothing
// but this to stand the device back up.
struct DeviceBundle {
    BundleManifest manifest;
    std::vector<StoredDocument> documents;
    std::map<std::string, std::string> snapshot; // "<service key>/<variable>" → value
    desc::DeviceDescription root;
    std::vector<CuratedService> services;

    const StoredDocument* document_by_serve_path(std::string_view serve_path) const;
    const CuratedService* service_by_key(std::string_view key) const;

    // Map a snapshot key back to (service, variable). Returns nullptr when
    // the key does not name a declared variable.
    const desc::StateVariableDef* resolve_snapshot_key(
        std::string_view key, const CuratedService** service = nullptr) const;
};

// Derives the snapshot qualifier from a service type URN:
// "urn:Belkin:service:basicevent:1" → "basicevent".
std::string service_key_for_type(const std::string& service_type);

// Rebuilds root/services from the stored documents; used by crawl and load
// so both sides derive the curated list the same way. Throws
// Error{bundle_invalid} when the root document is missing or unparseable.
void rebuild_curated(DeviceBundle& bundle);

// Fills snapshot defaults for every declared variable that has no entry yet.
// Returns the keys that were defaulted.
std::vector<std::string> apply_snapshot_defaults(DeviceBundle& bundle);

// Throws Error{io_failure} on filesystem trouble. Layout:
//   <dir>/manifest.json, <dir>/documents/<store_path>, <dir>/snapshot.txt
void save_bundle(const DeviceBundle& bundle, const std::filesystem::path& dir);

// Verifies manifest structure and content checksums; throws
// Error{manifest_corrupt, <what>} naming the offending entry.
DeviceBundle load_bundle(const std::filesystem::path& dir);

// Rewrites snapshot.txt and its manifest checksum in-place (runtime state
// checkpointing for a deployed instance).
void checkpoint_snapshot(const std::filesystem::path& dir,
                         const std::map<std::string, std::string>& snapshot);

std::string serialize_snapshot(const std::map<std::string, std::string>& snapshot);
std::map<std::string, std::string> parse_snapshot(std::string_view text);

} // namespace dupnp
