#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace prefmargin {

/// 64-bit FNV-1a. Used for reproducibility fingerprints, not for security.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
    return buf;
}

}  // namespace prefmargin
