#pragma once

#include <atomic>
#include <cstring>
#include <type_traits>

namespace mevo {

/// Single-writer sequence lock for publishing small trivially-copyable
/// snapshots. The writer never waits; readers retry while a write is in
/// progress.
template <typename T>
class SeqLock {
  static_assert(std::is_trivially_copyable_v<T>);

 public:
  void store(const T& value) {
    const unsigned s = seq_.load(std::memory_order_relaxed);
    seq_.store(s + 1, std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_release);
    copy_in(value);
    std::atomic_thread_fence(std::memory_order_release);
    seq_.store(s + 2, std::memory_order_relaxed);
  }

  T load() const {
    T out;
    unsigned before = 0;
    unsigned after = 0;
    do {
      before = seq_.load(std::memory_order_acquire);
      copy_out(out);
      std::atomic_thread_fence(std::memory_order_acquire);
      after = seq_.load(std::memory_order_relaxed);
    } while ((before & 1U) != 0 || before != after);
    return out;
  }

 private:
  // Word-wise relaxed atomic copies keep concurrent access race-free.
  static constexpr std::size_t kWords = (sizeof(T) + sizeof(unsigned long) - 1) / sizeof(unsigned long);

  void copy_in(const T& value) {
    unsigned long buf[kWords] = {};
    std::memcpy(buf, &value, sizeof(T));
    for (std::size_t i = 0; i < kWords; ++i) words_[i].store(buf[i], std::memory_order_relaxed);
  }

  void copy_out(T& out) const {
    unsigned long buf[kWords];
    for (std::size_t i = 0; i < kWords; ++i) buf[i] = words_[i].load(std::memory_order_relaxed);
    std::memcpy(&out, buf, sizeof(T));
  }

  std::atomic<unsigned> seq_{0};
  std::atomic<unsigned long> words_[kWords] = {};
};

}  // namespace mevo
