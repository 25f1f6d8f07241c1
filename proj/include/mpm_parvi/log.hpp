#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace mpm_parvi::log {

using Sink = std::function<void(std::string_view)>;

namespace detail {
inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}
inline Sink& sink() {
  static Sink s = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}
}  // namespace detail

/// Replaces the warning sink; returns the previous one.
inline Sink set_sink(Sink s) {
  std::lock_guard lock(detail::sink_mutex());
  std::swap(detail::sink(), s);
  return s;
}

inline void warn(std::string_view msg) {
  std::lock_guard lock(detail::sink_mutex());
  if (detail::sink()) detail::sink()(msg);
}

}  // namespace mpm_parvi::log
