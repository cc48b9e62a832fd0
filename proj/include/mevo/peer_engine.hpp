#pragma once

// One NMP peer, independent of who drives it. Three entry points map to the
// three contexts of a running peer:
//
//   on_datagram()          network ingest (decode, probe replies, enqueue)
//   run_cycle()            audio cycle (drain, pull, mix, render, capture, send)
//   sample()/send_probes() telemetry/control (snapshots, RTT probes)
//
// realtime_session.hpp runs them on threads; netsim calls them from its event
// queue. Times are microseconds of the peer's own clock.

#include <atomic>
#include <climits>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mevo/audio_device.hpp"
#include "mevo/errors.hpp"
#include "mevo/session_config.hpp"
#include "mevo/stream_channel.hpp"
#include "mevo/telemetry.hpp"

namespace mevo {

class Transport {
 public:
  virtual ~Transport() = default;
  /// Must not block for long; failures are the transport's business.
  virtual void send(PeerId to, std::span<const std::uint8_t> datagram) = 0;
};

struct BufferUpdate {
  std::optional<double> percentile;
  std::optional<std::uint32_t> max_target_frames;
  std::optional<std::uint32_t> min_target_frames;
  std::optional<std::uint32_t> safety_margin_frames;
  std::optional<double> window_seconds;
};

struct MetronomeUpdate {
  std::optional<bool> enabled;
  std::optional<std::uint32_t> bpm;
  std::optional<std::uint32_t> beats_per_bar;
};

struct RoutingUpdate {
  SourceId source;
  Bus bus = Bus::Monitor;
  float gain = 0;
};

using Mutation = std::variant<BufferUpdate, MetronomeUpdate, RoutingUpdate>;

/// A rejected control mutation. code() is a stable machine-readable token:
/// out_of_range, unknown_source, metronome_muted, metronome_unavailable,
/// session_stopped.
class MutationError : public ConfigError {
 public:
  MutationError(std::string code, const std::string& message)
      : ConfigError(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Control-side view of the session (what GET /status reports).
struct EngineState {
  SessionConfig config;  // with the current jitter and metronome settings
  RoutingMatrix<float> routing;
  bool metronome_stream = false;  // metronome stream present in this session
  bool stopped = false;
};

struct PeerCounters {
  std::uint64_t audio_sent = 0;
  std::uint64_t metronome_sent = 0;
  std::uint64_t probes_sent = 0;
  std::uint64_t pongs_sent = 0;
  std::uint64_t dgrams_recv = 0;
};

class PeerEngine {
 public:
  /// Throws ConfigError when the config is invalid.
  PeerEngine(SessionConfig config, AudioDevice& device, Transport& transport);
  ~PeerEngine();

  PeerEngine(const PeerEngine&) = delete;
  PeerEngine& operator=(const PeerEngine&) = delete;

  // network ingest context
  void on_datagram(std::span<const std::uint8_t> bytes, std::int64_t now_us);

  // audio context
  void run_cycle(std::int64_t now_us);

  // telemetry context
  void send_probes(std::int64_t now_us);
  TelemetrySample sample(std::int64_t now_us, double t_s);

  // control context. submit() validates against the control-side state and
  // throws ConfigError without queuing anything when the change is invalid;
  // accepted changes reach the audio context at its next cycle boundary.
  void submit(const Mutation& mutation);
  EngineState state() const;
  void stop() { stopped_.store(true); }
  bool stopped() const { return stopped_.load(); }

  const SessionConfig& initial_config() const { return config_; }
  std::uint64_t cycles() const { return cycles_.load(std::memory_order_relaxed); }
  std::uint64_t malformed() const { return malformed_.load(std::memory_order_relaxed); }
  PeerCounters peer_counters(PeerId peer) const;

  /// Incoming streams in routing order (remote peers, then the metronome).
  std::size_t stream_count() const { return streams_.size(); }
  StreamKey stream_key(std::size_t i) const;
  /// Audio context only; for single-threaded harnesses and tests.
  StreamChannel& stream(std::size_t i);
  std::optional<std::size_t> stream_index(std::uint8_t stream_id) const;
  /// The audio context's routing and metronome (single-threaded use only).
  const RoutingMatrix<float>& active_routing() const { return routing_; }
  const MetronomeSettings& active_metronome() const { return metronome_; }
  /// Applies queued mutations now (single-threaded harnesses).
  void apply_pending();

 private:
  struct PeerLink;
  struct Stream;

  void apply(const Mutation& m);
  PeerLink* link_for(PeerId id) const;
  PeerLink* link_by_stream(std::uint8_t stream_id) const;
  void handle_probe(const ProbePacket& probe, std::int64_t now_us);
  void send_to(PeerLink& link, std::span<const std::uint8_t> bytes);

  SessionConfig config_;
  AudioDevice& device_;
  Transport& transport_;
  const PeerInfo local_;

  std::vector<std::unique_ptr<PeerLink>> links_;
  std::vector<std::unique_ptr<Stream>> streams_;

  // audio context
  RoutingMatrix<float> routing_;
  MetronomeSettings metronome_;
  JitterBufferConfig jitter_;
  bool metronome_owner_ = false;
  bool metronome_stream_ = false;
  std::int64_t frame_index_ = 0;
  SeqNo seq_ = 0;
  std::vector<std::int16_t> capture_;
  std::vector<std::int16_t> pulled_;
  std::vector<float> click_;
  std::vector<std::int16_t> click_samples_;
  std::vector<std::uint8_t> wire_;
  SourceBlock<float> inputs_;
  AudioPacket outgoing_;

  // control context
  mutable std::mutex control_mu_;
  EngineState control_;
  std::mutex mailbox_mu_;
  std::vector<Mutation> mailbox_;
  std::atomic<bool> mailbox_pending_{false};

  // telemetry context
  std::int64_t last_sample_us_ = INT64_MIN;
  std::uint64_t sample_index_ = 0;
  SeqNo probe_seq_ = 0;

  std::atomic<std::uint64_t> cycles_{0};
  std::atomic<std::uint64_t> malformed_{0};
  std::atomic<bool> stopped_{false};
};

}  // namespace mevo
