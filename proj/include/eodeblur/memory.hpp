#pragma once

// Process-wide accounting of large numeric buffers. Every pixel plane,
// spectrum and tensor in the toolkit allocates through TrackedAllocator, so
// the counters below measure the working set the pipeline's estimator
// predicts.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <new>
#include <vector>

namespace eodeblur::memory {

namespace detail {
inline std::atomic<std::int64_t> current_bytes{0};
inline std::atomic<std::int64_t> peak_bytes{0};

inline void on_allocate(std::int64_t bytes) noexcept {
  const std::int64_t now = current_bytes.fetch_add(bytes) + bytes;
  std::int64_t seen = peak_bytes.load();
  while (now > seen && !peak_bytes.compare_exchange_weak(seen, now)) {
  }
}

inline void on_release(std::int64_t bytes) noexcept { current_bytes.fetch_sub(bytes); }
}  // namespace detail

inline std::int64_t current_bytes() noexcept { return detail::current_bytes.load(); }
inline std::int64_t peak_bytes() noexcept { return detail::peak_bytes.load(); }

/// Restarts peak tracking from the current live total.
inline void reset_peak() noexcept { detail::peak_bytes.store(detail::current_bytes.load()); }

template <class T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    const auto bytes = static_cast<std::int64_t>(n * sizeof(T));
    T* p = static_cast<T*>(::operator new(n * sizeof(T)));
    detail::on_allocate(bytes);
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    detail::on_release(static_cast<std::int64_t>(n * sizeof(T)));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackedAllocator<U>&) const noexcept { return true; }
};

}  // namespace eodeblur::memory

namespace eodeblur {
template <class T>
using tracked_vector = std::vector<T, memory::TrackedAllocator<T>>;
}  // namespace eodeblur
