#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace lobcast {

// FNV-1a 64-bit content hash. Good enough to detect input drift in run
// manifests; not cryptographic.
inline uint64_t fnv1a64(const char* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    for (size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << h;
    return os.str();
}

inline std::string digest_string(const std::string& s) {
    return hex64(fnv1a64(s.data(), s.size()));
}

inline std::string digest_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return "missing";
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
    }
    return hex64(h);
}

}  // namespace lobcast
