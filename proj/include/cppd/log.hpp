#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace cppd {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

/// Verbosity from CPPD_LOG in {quiet, info, debug}; defaults to info.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("CPPD_LOG");
    if (env && std::strcmp(env, "quiet") == 0) return LogLevel::kQuiet;
    if (env && std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

template <class... Args>
void log_info(const char* fmt, Args... args) {
  if (log_level() >= LogLevel::kInfo) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

template <class... Args>
void log_debug(const char* fmt, Args... args) {
  if (log_level() >= LogLevel::kDebug) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

}  // namespace cppd
