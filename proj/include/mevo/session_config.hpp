#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <boost/property_tree/ptree_fwd.hpp>

#include "mevo/jitter_buffer.hpp"
#include "mevo/metronome.hpp"
#include "mevo/routing.hpp"
#include "mevo/wire.hpp"

namespace mevo {

using PeerId = std::uint32_t;

struct PeerInfo {
  PeerId id = 0;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::uint8_t stream_id = 0;
  std::string site;

  bool operator==(const PeerInfo&) const = default;
};

struct RouteGain {
  SourceId source;
  Bus bus = Bus::Monitor;
  float gain = 0.0F;

  bool operator==(const RouteGain&) const = default;
};

struct SessionConfig {
  PeerId local_peer_id = 0;
  std::vector<PeerInfo> peers;  // every participant, local peer included
  StreamConfig stream;
  JitterBufferConfig jitter;
  MetronomeSettings metronome;
  std::vector<RouteGain> routes;  // overrides applied on top of default_routing()
  std::uint16_t control_port = 0;  // 0: control API disabled
  std::string telemetry_log;

  const PeerInfo& local() const;
  std::vector<PeerInfo> remote_peers() const;
  const PeerInfo* find_peer(PeerId id) const;

  /// Throws ConfigError on duplicate peer ids, a missing local peer, clashing
  /// stream ids or invalid stream/buffer/metronome settings.
  void validate() const;
  bool operator==(const SessionConfig&) const = default;
};

/// Rows: local monitor, metronome, then every remote peer in config order.
std::vector<SourceId> routing_sources(const SessionConfig& config);

/// Defaults: remote streams on both buses at unity, metronome on the monitor
/// bus only, local capture on neither (heard acoustically), then the
/// configured overrides.
RoutingMatrix<float> build_routing(const SessionConfig& config);

SessionConfig session_from_ptree(const boost::property_tree::ptree& tree);
SessionConfig parse_session_config(const std::string& text);
SessionConfig load_session_config(const std::filesystem::path& path);
std::string format_session_config(const SessionConfig& config);

}  // namespace mevo
