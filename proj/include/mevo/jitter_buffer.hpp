#pragma once

// Adaptive playout buffer for one incoming stream.
//
// Every packet slot of the stream timeline is decided exactly once when the
// playout cursor reaches it: played (packet present), lost (missing, concealed
// with silence) or skipped (dropped to shrink the buffer or absorb drift). A
// packet arriving for an already-concealed slot within late_timeout moves that
// slot's frames from lost to late. So:
//
//   frames_concealed == frames_lost + frames_late
//   frames_played + frames_concealed + frames_inserted == frames pulled
//   frames sent == played + lost + late + skipped + (frames not yet decided)
//
// The object itself is single-threaded. StreamChannel (stream_channel.hpp)
// provides the SPSC hand-off between a network thread and the audio thread.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mevo/wire.hpp"

namespace mevo {

struct JitterBufferConfig {
  double window_seconds = 4.0;
  double percentile = 99.0;
  std::uint32_t safety_margin_frames = 128;
  std::uint32_t min_target_frames = 128;
  std::uint32_t max_target_frames = 1536;
  std::uint32_t late_timeout_ms = 1000;
  /// Cadence of target re-estimation inside tick().
  std::uint32_t adapt_interval_ms = 100;
  /// Observation window for drift regulation inside tick().
  std::uint32_t regulation_window_ms = 1000;

  void validate() const;
  bool operator==(const JitterBufferConfig&) const = default;
};

struct TransitRecord {
  SeqNo seq = 0;
  std::int64_t send_time_us = 0;  // sender clock, unwrapped
  std::int64_t recv_time_us = 0;  // receiver clock
  std::int64_t relative_transit_us = 0;
};

/// Subtracts the window minimum so that every relative_transit_us >= 0.
void normalize_transits(std::span<TransitRecord> window);

/// Nearest-rank percentile of relative transit, converted to frames (rounded
/// up), plus the safety margin, clamped to [min_target, max_target]. An empty
/// window returns `current`.
std::uint32_t estimate_target_delay(std::span<const TransitRecord> window,
                                    const JitterBufferConfig& config, std::uint32_t sample_rate,
                                    std::uint32_t current);

/// Rounds `frames` up to a whole number of packets.
std::uint32_t quantize_to_packets(std::uint32_t frames, std::uint32_t frames_per_packet);

enum class Arrival : std::uint8_t { OnTime, Late, Duplicate, Overflow };

enum class SlotOutcome : std::uint8_t { Pending, Played, Lost, Late, Skipped };

const char* to_string(Arrival a);
const char* to_string(SlotOutcome o);

struct JitterCounters {
  std::uint64_t frames_played = 0;
  std::uint64_t frames_lost = 0;
  std::uint64_t frames_late = 0;
  std::uint64_t frames_concealed = 0;
  std::uint64_t frames_skipped = 0;
  std::uint64_t frames_inserted = 0;
  std::uint64_t skip_events = 0;
  std::uint64_t insert_events = 0;
  std::uint64_t packets_on_time = 0;
  std::uint64_t packets_late = 0;
  std::uint64_t packets_duplicate = 0;
  std::uint64_t packets_overflow = 0;
  std::uint64_t resyncs = 0;

  bool operator==(const JitterCounters&) const = default;
};

/// Emitted whenever a slot is decided or reclassified. slot is the unwrapped
/// slot index (0 = stream origin when playout was anchored there).
struct SlotEvent {
  std::int64_t slot = 0;
  SeqNo seq = 0;
  SlotOutcome outcome = SlotOutcome::Pending;
  std::int64_t time_us = 0;
};

using SlotObserver = std::function<void(const SlotEvent&)>;

/// Playout level at the last pull, enough to evaluate the buffer delay at a
/// later instant without touching the buffer (telemetry snapshots).
struct BufferLevel {
  std::int64_t occupancy_frames = 0;
  std::int64_t last_pull_us = 0;
  std::uint32_t last_pull_frames = 0;
  bool pulled = false;
};

/// occupancy plus the part of the last pulled block not yet played at now_us.
std::int64_t buffer_delay_us(const BufferLevel& level, std::int64_t now_us, std::uint32_t sample_rate);

/// Fills the frames of a missing slot. The default writes silence.
class Concealer {
 public:
  virtual ~Concealer() = default;
  virtual void conceal(std::span<const std::int16_t> previous, std::span<std::int16_t> out) = 0;
};

class SilenceConcealer final : public Concealer {
 public:
  void conceal(std::span<const std::int16_t> previous, std::span<std::int16_t> out) override;
};

class JitterBuffer {
 public:
  JitterBuffer(StreamConfig stream, JitterBufferConfig config);
  ~JitterBuffer();
  JitterBuffer(JitterBuffer&&) noexcept;
  JitterBuffer& operator=(JitterBuffer&&) noexcept;

  Arrival push(const AudioPacket& packet, std::int64_t recv_time_us);

  /// Writes exactly out.size() / channels frames. Before the first packet has
  /// arrived the output is silence and nothing is counted.
  void pull(std::int64_t now_us, std::span<std::int16_t> out);
  std::vector<std::int16_t> pull(std::uint32_t n_frames, std::int64_t now_us);

  /// Per-cycle maintenance: periodic re-estimation + adapt, and drift
  /// regulation (one skip or insert when the buffer level sits a whole packet
  /// away from the target over a regulation window).
  void tick(std::int64_t now_us);

  /// Moves the target one packet toward new_target (rounded up to a packet).
  /// Returns +1 (inserted silence), -1 (skipped a slot) or 0.
  int adapt(std::uint32_t new_target);

  /// Current estimate from the transit window; does not change state.
  std::uint32_t estimate() const;

  std::uint32_t target_delay_frames() const { return target_; }
  /// Frames held for playout: buffered slots, the undelivered rest of the
  /// current slot and pending inserted silence.
  std::int64_t occupancy_frames() const;
  /// Delay seen by the newest received frame: occupancy plus the part of the
  /// last pulled block still being played out, in microseconds.
  std::int64_t measured_buffer_delay(std::int64_t now_us) const;
  BufferLevel level() const;

  const JitterCounters& counters() const { return counters_; }
  bool started() const { return started_; }
  SeqNo next_playout_seq() const { return cursor_seq_; }
  std::int64_t next_playout_slot() const { return cursor_slot_; }
  std::vector<TransitRecord> window() const;

  const JitterBufferConfig& config() const { return config_; }
  const StreamConfig& stream() const { return stream_; }
  /// Applies new estimator/clamp settings; the current target is re-clamped.
  void set_config(const JitterBufferConfig& config);

  void set_observer(SlotObserver observer) { observer_ = std::move(observer); }
  void set_concealer(std::unique_ptr<Concealer> concealer);

 private:
  struct StoredSlot {
    std::int64_t slot = -1;
    bool present = false;
    std::vector<std::int16_t> payload;
  };
  struct HistoryEntry {
    std::int64_t slot = -1;
    SlotOutcome outcome = SlotOutcome::Pending;
    std::int64_t decided_us = 0;
    bool arrived = false;
  };

  void start(const AudioPacket& packet);
  void record_transit(const AudioPacket& packet, std::int64_t recv_time_us);
  void prune_window(std::int64_t now_us);
  Arrival classify_old(std::int64_t slot, std::int64_t recv_time_us);
  void decide_slot(std::int64_t now_us);
  void skip_slot(std::int64_t now_us);
  void insert_silence();
  void emit(std::int64_t slot, SlotOutcome outcome, std::int64_t time_us);
  SeqNo seq_of(std::int64_t slot) const;

  StreamConfig stream_;
  JitterBufferConfig config_;
  std::size_t slot_samples_;
  std::uint32_t target_;

  bool started_ = false;
  std::int64_t cursor_slot_ = 0;
  SeqNo cursor_seq_ = 0;
  std::int64_t newest_end_slot_ = 0;
  std::uint32_t pending_silence_ = 0;

  std::vector<std::int16_t> current_;
  std::size_t current_pos_ = 0;  // samples of current_ already delivered
  std::vector<std::int16_t> previous_;

  std::vector<StoredSlot> store_;
  std::vector<HistoryEntry> history_;
  std::uint32_t consecutive_overflow_ = 0;

  std::deque<TransitRecord> window_;
  // raw transits of window_ in order, for O(log n) percentile queries
  struct TransitIndex;
  std::unique_ptr<TransitIndex> index_;
  std::uint64_t transits_pushed_ = 0;
  bool have_send_ref_ = false;
  std::uint32_t last_send32_ = 0;
  std::int64_t last_send_unwrapped_ = 0;

  std::int64_t next_estimate_us_ = 0;
  bool estimate_scheduled_ = false;
  std::int64_t regulation_start_us_ = 0;
  std::int64_t regulation_max_ = -1;

  std::int64_t clock_us_ = 0;  // latest time seen by push/pull/tick
  std::int64_t last_pull_us_ = 0;
  std::uint32_t last_pull_frames_ = 0;
  bool pulled_ = false;

  JitterCounters counters_;
  SlotObserver observer_;
  std::unique_ptr<Concealer> concealer_;
};

}  // namespace mevo
