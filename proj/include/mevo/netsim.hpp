#pragma once

// Deterministic discrete-event simulation of a multi-peer session. Peer
// engines run unmodified; the simulator stands in for their audio clocks,
// sockets and telemetry timer. True time is integer nanoseconds.
//
// Event order at equal times: deliveries, then audio cycles, then telemetry
// ticks, each in scheduling order.
//
// Each peer takes telemetry samples for duration_s seconds of its own clock.
// Audio cycles of every peer continue until the latest of those instants, so
// a receiver never outlives the sender it plays.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mevo/peer_engine.hpp"
#include "mevo/scenario.hpp"

namespace mevo {

/// Final accounting of one (sender -> receiver) stream.
struct StreamTruth {
  PeerId src = 0;
  PeerId dst = 0;
  std::uint32_t stream_id = 0;
  bool metronome = false;
  std::uint32_t frames_per_packet = 0;

  std::uint64_t dgrams_sent = 0;
  std::uint64_t dgrams_dropped = 0;
  std::uint64_t dgrams_delivered = 0;
  std::uint64_t dgrams_after_end = 0;  // in flight when the receiver stopped

  // slot tallies from the receiver's slot events, restricted to sent slots
  std::uint64_t slots_sent = 0;
  std::uint64_t slots_played = 0;
  std::uint64_t slots_lost = 0;
  std::uint64_t slots_late = 0;
  std::uint64_t slots_skipped = 0;
  std::uint64_t slots_in_flight = 0;
  std::uint64_t slots_overrun = 0;     // decided before the sender produced them
  std::uint64_t decision_errors = 0;   // slots decided twice or reclassified wrongly
  std::uint64_t resyncs = 0;

  JitterCounters counters;       // receiver buffer counters at the end
  JitterCounters tick_counters;  // receiver buffer counters at its last tick
  TelemetryRow final_row;        // receiver telemetry row at the last tick

  std::uint64_t frames(std::uint64_t slots) const { return slots * frames_per_packet; }
  /// sent == played + lost + late + skipped + in_flight, exactly, and the
  /// buffer counters agree with the slot tallies.
  bool conserved() const;
  /// Telemetry counters at the last tick equal the buffer counters read
  /// directly at that tick.
  bool telemetry_consistent() const;
};

struct PeerResult {
  PeerId id = 0;
  std::string telemetry_csv;
  std::uint64_t cycles = 0;
  std::uint64_t samples = 0;
  std::vector<std::int16_t> captured;  // when record_audio
  std::vector<std::int16_t> monitor;
  std::vector<std::int16_t> audience;
};

struct SimResult {
  std::string scenario;
  std::vector<PeerResult> peers;
  std::vector<StreamTruth> streams;
  std::string ground_truth_csv;  // per datagram (empty unless full ground truth)
  std::string streams_csv;       // per stream
  std::uint64_t events = 0;

  const PeerResult& peer(PeerId id) const;
  const StreamTruth& stream(PeerId src, PeerId dst, bool metronome = false) const;
};

struct SimHooks {
  /// Called after every audio cycle with the peer index and true time.
  std::function<void(std::size_t, std::int64_t, PeerEngine&)> after_cycle;
  /// Called before a datagram is handed to the link; returning true drops it
  /// (scripted losses in tests).
  std::function<bool(PeerId src, PeerId dst, std::span<const std::uint8_t>)> drop;
};

/// Throws ConfigError for an invalid scenario before any event runs.
SimResult run(const Scenario& scenario, const SimHooks& hooks = {});

/// telemetry_peer<N>.csv per peer, ground_truth.csv, ground_truth_streams.csv.
std::vector<std::filesystem::path> write_outputs(const SimResult& result, const std::filesystem::path& dir);

/// True time of audio cycle k of a peer (cycle period follows the peer clock).
std::int64_t cycle_time_ns(std::int64_t k, const StreamConfig& stream, const ClockModel& clock);
/// True time at which a peer's clock reads `local_s` seconds of session time.
std::int64_t local_to_true_ns(double local_s, const ClockModel& clock);
/// Peer clock reading in microseconds at a true time.
std::int64_t local_us(std::int64_t true_ns, const ClockModel& clock);

}  // namespace mevo
