#pragma once

// Hand-off around one JitterBuffer: the network context enqueues decoded
// packets, the audio context drains them into the buffer at the start of its
// cycle and publishes a snapshot that the telemetry context reads.

#include <atomic>
#include <cstdint>

#include "mevo/jitter_buffer.hpp"
#include "mevo/seqlock.hpp"
#include "mevo/spsc_ring.hpp"

namespace mevo {

struct InboundPacket {
  AudioPacket packet;
  std::int64_t recv_time_us = 0;
};

struct StreamSnapshot {
  JitterCounters counters;
  std::uint32_t target_frames = 0;
  BufferLevel level;
  bool started = false;
};

class StreamChannel {
 public:
  StreamChannel(StreamConfig stream, JitterBufferConfig config, std::size_t capacity = 1024)
      : buffer_(stream, config), ring_(capacity) {}

  /// Network context. Returns false (and counts a drop) when the ring is full.
  bool enqueue(AudioPacket&& packet, std::int64_t recv_time_us) {
    if (ring_.try_push(InboundPacket{std::move(packet), recv_time_us})) return true;
    ring_drops_.fetch_add(1, std::memory_order_relaxed);
    return false;
  }

  /// Audio context: push every queued packet into the buffer.
  void drain() {
    while (ring_.try_pop(scratch_)) buffer_.push(scratch_.packet, scratch_.recv_time_us);
  }

  /// Audio context.
  void publish() {
    snapshot_.store({buffer_.counters(), buffer_.target_delay_frames(), buffer_.level(), buffer_.started()});
  }

  /// Any context.
  StreamSnapshot snapshot() const { return snapshot_.load(); }
  std::uint64_t ring_drops() const { return ring_drops_.load(std::memory_order_relaxed); }

  /// Audio context only (or single-threaded harnesses).
  JitterBuffer& buffer() { return buffer_; }
  const JitterBuffer& buffer() const { return buffer_; }

 private:
  JitterBuffer buffer_;
  SpscRing<InboundPacket> ring_;
  InboundPacket scratch_;
  SeqLock<StreamSnapshot> snapshot_;
  std::atomic<std::uint64_t> ring_drops_{0};
};

}  // namespace mevo
