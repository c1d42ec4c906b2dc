#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace lobcast {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// Verbosity comes from LOBCAST_LOG (error|warn|info|debug or 0..3), default warn.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("LOBCAST_LOG");
        if (!env) return LogLevel::warn;
        const std::string v(env);
        if (v == "error" || v == "0") return LogLevel::error;
        if (v == "warn" || v == "1") return LogLevel::warn;
        if (v == "info" || v == "2") return LogLevel::info;
        if (v == "debug" || v == "3") return LogLevel::debug;
        return LogLevel::warn;
    }();
    return level;
}

inline void log(LogLevel lvl, const std::string& msg) {
    if (lvl > log_level()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[lobcast:" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

}  // namespace lobcast
