#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace cdasr {

enum class LogLevel { debug, info, warning, error };

namespace detail {
struct LogSink {
    std::mutex mutex;
    std::function<void(LogLevel, std::string_view)> handler;
    LogLevel threshold = LogLevel::info;
};

inline LogSink& log_sink()
{
    static LogSink sink;
    return sink;
}

inline const char* level_tag(LogLevel level)
{
    switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warning: return "warning";
    case LogLevel::error: return "error";
    }
    return "?";
}
} // namespace detail

// Replace the sink (tests capture warnings this way). Pass an empty function
// to restore stderr output.
inline void set_log_handler(std::function<void(LogLevel, std::string_view)> handler)
{
    auto& sink = detail::log_sink();
    std::lock_guard lock(sink.mutex);
    sink.handler = std::move(handler);
}

inline void set_log_threshold(LogLevel level)
{
    auto& sink = detail::log_sink();
    std::lock_guard lock(sink.mutex);
    sink.threshold = level;
}

inline void log_message(LogLevel level, std::string_view message)
{
    auto& sink = detail::log_sink();
    std::lock_guard lock(sink.mutex);
    if (sink.handler) {
        sink.handler(level, message);
        return;
    }
    if (level < sink.threshold)
        return;
    std::cerr << "[cdasr:" << detail::level_tag(level) << "] " << message << '\n';
}

inline void log_warning(std::string_view message) { log_message(LogLevel::warning, message); }
inline void log_info(std::string_view message) { log_message(LogLevel::info, message); }

} // namespace cdasr
