// Copyright 2026 The linrec authors
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

#include <atomic>
#include <charconv>
#include <cstdint>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace linrec {

// Bad or inconsistent input data (unreadable files, malformed rows, empty
// matrices, provenance mismatches). CLI exit code 2.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures (singular systems, rank violations, budget overruns).
// CLI exit code 3.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values caught before any computation. CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2 };

inline std::atomic<int>& log_level_ref() {
  static std::atomic<int> level{static_cast<int>(LogLevel::Warn)};
  return level;
}

inline void set_log_level(LogLevel level) {
  log_level_ref().store(static_cast<int>(level));
}

inline void log_warn(const std::string& msg) {
  if (log_level_ref().load() >= static_cast<int>(LogLevel::Warn)) {
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "[warn] " << msg << "\n";
  }
}

inline void log_info(const std::string& msg) {
  if (log_level_ref().load() >= static_cast<int>(LogLevel::Info)) {
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "[info] " << msg << "\n";
  }
}

inline std::atomic<int>& max_threads_ref() {
  static std::atomic<int> threads{0};  // 0 = hardware concurrency
  return threads;
}

inline void set_max_threads(int threads) { max_threads_ref().store(threads); }

inline int effective_threads() {
  int t = max_threads_ref().load();
  if (t <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    t = hw == 0 ? 1 : static_cast<int>(hw);
  }
  return t;
}

// Runs fn(i) for i in [0, count). Each index writes only its own state, so
// results are independent of the thread schedule; callers needing an ordered
// reduction fold the per-index results afterwards.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const int threads = effective_threads();
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Shortest round-trip decimal rendering, '.' decimal point regardless of
// locale. Used for every CSV/report number the tool emits.
inline std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline std::string format_double_fixed(double value, int precision) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value,
                           std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

}  // namespace linrec
