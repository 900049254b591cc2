#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace chatasu::text {

// Unicode NFC normalization. Invalid UTF-8 sequences come back as U+FFFD.
std::string nfc(std::string_view s);

// Strips ASCII whitespace plus U+00A0 and U+3000 from both ends.
std::string_view trim(std::string_view s);

// Span identity key: NFC then trim. Two spans are the same span iff their
// keys are byte-equal. No case folding.
std::string span_key(std::string_view s);

bool iequals_ascii(std::string_view a, std::string_view b);
std::string to_lower_ascii(std::string_view s);

// 64-bit FNV-1a; used for seeding and cheap content ids, never for security.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace chatasu::text
