// Copyright 2026 The UAST Authors.
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

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace uast::log {

enum class Level { error = 0, info = 1, debug = 2 };

// Reads UAST_LOG once; unknown values fall back to `error`.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("UAST_LOG");
    if (env == nullptr) return Level::error;
    std::string_view v(env);
    if (v == "debug") return Level::debug;
    if (v == "info") return Level::info;
    return Level::error;
  }();
  return level;
}

inline bool enabled(Level level) {
  return static_cast<int>(level) <= static_cast<int>(threshold());
}

template <typename... Args>
void write(Level level, const Args&... args) {
  if (!enabled(level)) return;
  static std::mutex mu;
  std::ostringstream os;
  static constexpr const char* kTags[] = {"E", "I", "D"};
  os << "[uast " << kTags[static_cast<int>(level)] << "] ";
  (os << ... << args);
  os << '\n';
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << os.str();
}

template <typename... Args>
void error(const Args&... args) { write(Level::error, args...); }
template <typename... Args>
void info(const Args&... args) { write(Level::info, args...); }
template <typename... Args>
void debug(const Args&... args) { write(Level::debug, args...); }

}  // namespace uast::log
