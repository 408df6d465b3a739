#pragma once

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <memory>
#include <string>

namespace fh {

// stderr logger; FH_LOG picks the level (trace, debug, info, warn, error, off), default warn.
inline std::shared_ptr<spdlog::logger> log() {
  static const std::shared_ptr<spdlog::logger> lg = [] {
    auto l = spdlog::stderr_logger_mt("fh");
    l->set_pattern("[fh %l] %v");
    const char* env = std::getenv("FH_LOG");
    const auto level = env ? spdlog::level::from_str(env) : spdlog::level::warn;
    // from_str maps unknown names to off; keep warnings in that case
    l->set_level(env && level == spdlog::level::off && std::string(env) != "off" ? spdlog::level::warn
                                                                                : level);
    return l;
  }();
  return lg;
}

}  // namespace fh
