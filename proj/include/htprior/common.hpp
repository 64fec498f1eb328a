#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace htprior {

inline constexpr double kPi = std::numbers::pi;

// Shapes, channel counts or parameter values that cannot work together.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API called out of order (backward without a recorded pass, step without grads).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Filesystem and format failures. The message always names the offending file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses a thread count such as the HTPRIOR_THREADS value.
inline std::size_t parse_thread_count(std::string_view text) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size() || v < 1 || v > 4096)
    throw ConfigError("HTPRIOR_THREADS must be an integer in [1, 4096], got '" + std::string(text) + "'");
  return v;
}

// Worker thread cap. HTPRIOR_THREADS overrides the hardware count; an
// unparsable value is ignored here (the CLI rejects it up front).
inline std::size_t worker_threads() {
  static const std::size_t count = [] {
    if (const char* env = std::getenv("HTPRIOR_THREADS")) {
      try {
        return parse_thread_count(env);
      } catch (const ConfigError&) {
      }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }();
  return count;
}

// Runs fn(begin, end) over contiguous chunks of [0, n). Every callback writes
// a disjoint output range, so results do not depend on the thread count.
inline void parallel_for(std::size_t n, std::size_t min_chunk,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t threads =
      std::min(worker_threads(), min_chunk == 0 ? n : std::max<std::size_t>(1, n / min_chunk));
  if (threads <= 1 || n == 0) {
    if (n > 0) fn(0, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 1; t < threads; ++t) {
    const std::size_t b = t * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(n, chunk));
}

// 64-bit FNV-1a, used for dataset content hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t size,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace htprior
