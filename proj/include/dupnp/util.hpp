#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace dupnp {

std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// 64-bit FNV-1a, used for bundle content checksums. Not cryptographic;
// it only guards against accidental corruption and hand edits.
uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

// Random version-4 style UUID, lower-case hex, no "uuid:" prefix.
std::string random_uuid(std::mt19937_64& rng);
std::mt19937_64 seeded_rng(uint64_t seed); // seed 0 draws from system entropy

// Percent-escaping for single-line log fields: escapes '%', control bytes,
// tab, CR/LF and bytes >= 0x7f so a record always stays on one line.
std::string escape_field(std::string_view raw);
std::string unescape_field(std::string_view field);

std::string iso8601_utc(std::chrono::system_clock::time_point tp);
std::optional<std::chrono::system_clock::time_point> parse_iso8601(std::string_view s);

} // namespace dupnp
