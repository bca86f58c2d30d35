#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace tdp {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Verbosity comes from the TDP_LOG environment variable: error|info|debug.
inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("TDP_LOG");
        if (env == nullptr) return LogLevel::Info;
        if (std::strcmp(env, "error") == 0) return LogLevel::Error;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        return LogLevel::Info;
    }();
    return level;
}

inline void log_at(LogLevel lvl, const char* tag, const char* fmt, va_list args) {
    if (lvl > log_level()) return;
    std::fprintf(stderr, "[%s] ", tag);
    std::vfprintf(stderr, fmt, args);
    std::fputc('\n', stderr);
}

inline void log_error(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    log_at(LogLevel::Error, "error", fmt, args);
    va_end(args);
}

inline void log_info(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    log_at(LogLevel::Info, "info", fmt, args);
    va_end(args);
}

inline void log_debug(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    log_at(LogLevel::Debug, "debug", fmt, args);
    va_end(args);
}

}  // namespace tdp
