#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace dip {

enum class LogLevel { kDebug, kInfo, kWarning, kError };

using LogSink = std::function<void(LogLevel, const std::string&)>;

namespace log_detail {
inline std::mutex& mutex() {
  static std::mutex m;
  return m;
}
inline LogSink& sink() {
  static LogSink s = [](LogLevel level, const std::string& msg) {
    if (level >= LogLevel::kWarning) {
      std::cerr << (level == LogLevel::kWarning ? "warning: " : "error: ") << msg << '\n';
    }
  };
  return s;
}
}  // namespace log_detail

/// Replaces the process-wide sink and returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(log_detail::mutex());
  return std::exchange(log_detail::sink(), std::move(sink));
}

inline void log(LogLevel level, const std::string& msg) {
  std::lock_guard lock(log_detail::mutex());
  if (log_detail::sink()) log_detail::sink()(level, msg);
}

inline void warn(const std::string& msg) { log(LogLevel::kWarning, msg); }

}  // namespace dip
