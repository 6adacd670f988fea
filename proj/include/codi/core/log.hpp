// Copyright 2026 The codi-iqa Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// Minimal leveled logging to stderr with a replaceable sink.

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

#include "codi/core/error.hpp"

namespace codi {

enum class LogLevel { kDebug, kInfo, kWarning, kError };

inline const char* to_string(LogLevel l) {
  switch (l) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarning: return "warning";
    case LogLevel::kError: return "error";
  }
  return "?";
}

using LogSink = std::function<void(LogLevel, const std::string&)>;

namespace detail {
struct LogState {
  std::mutex mu;
  LogLevel threshold = LogLevel::kInfo;
  LogSink sink = [](LogLevel l, const std::string& msg) { std::cerr << "[" << to_string(l) << "] " << msg << "\n"; };
};
inline LogState& log_state() {
  static LogState s;
  return s;
}
}  // namespace detail

/// Replaces the sink; returns the previous one so tests can restore it.
inline LogSink set_log_sink(LogSink sink) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mu);
  std::swap(s.sink, sink);
  return sink;
}

inline void set_log_level(LogLevel l) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mu);
  s.threshold = l;
}

template <typename... Args>
void log(LogLevel level, Args&&... args) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mu);
  if (level < s.threshold || !s.sink) return;
  s.sink(level, detail::concat(std::forward<Args>(args)...));
}

}  // namespace codi
