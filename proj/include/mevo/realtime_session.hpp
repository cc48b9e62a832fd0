#pragma once

// Runs a PeerEngine against the wall clock: an audio thread at the packet
// period, a network ingest thread, a 1 Hz telemetry thread and, when a
// control port is configured, the HTTP control server.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>

#include "mevo/audio_device.hpp"
#include "mevo/peer_engine.hpp"
#include "mevo/udp_transport.hpp"

namespace mevo {

struct RealtimeOptions {
  std::optional<double> duration_s;  // run until stopped when empty
};

class RealtimeSession {
 public:
  /// Binds the UDP port. Throws ConfigError or StartupError.
  RealtimeSession(SessionConfig config, AudioDevice& device);

  /// Blocks until the session is stopped (control API, request_stop() or
  /// the duration). Returns the control port actually bound, or 0.
  void run(const RealtimeOptions& options = {});
  void request_stop() { engine_.stop(); }

  PeerEngine& engine() { return engine_; }
  std::uint16_t udp_port() const { return transport_.bound_port(); }
  int control_port() const { return control_port_.load(); }
  const std::string& telemetry_error() const { return telemetry_error_; }

 private:
  std::int64_t now_us() const;

  SessionConfig config_;
  UdpTransport transport_;
  PeerEngine engine_;
  std::chrono::steady_clock::time_point epoch_;
  std::atomic<int> control_port_{0};
  std::string telemetry_error_;
};

}  // namespace mevo
