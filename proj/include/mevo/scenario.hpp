#pragma once

// Simulator experiment description and its INI file format
// (docs/scenario-format.md).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mevo/link_model.hpp"
#include "mevo/session_config.hpp"

namespace mevo {

/// Audio clock of one peer: local = true * (1 + drift_ppm * 1e-6) + offset.
struct ClockModel {
  double drift_ppm = 0;
  std::int64_t offset_us = 0;

  void validate() const;
  bool operator==(const ClockModel&) const = default;
};

struct ScenarioPeer {
  SessionConfig session;
  ClockModel clock;
  std::string source = "sine";  // see make_source()
};

struct Scenario {
  std::string name = "scenario";
  double duration_s = 10;
  std::uint64_t seed = 1;
  std::vector<ScenarioPeer> peers;
  std::map<std::pair<PeerId, PeerId>, LinkModel> links;  // (src, dst)
  bool full_ground_truth = true;  // one ground-truth row per datagram
  bool record_audio = false;      // keep captured input and bus output in memory

  /// Throws ConfigError: no peers, inconsistent sessions, missing links.
  void validate() const;
  const LinkModel& link(PeerId src, PeerId dst) const;
  /// Link seed used by the simulator: the link's own seed when non-zero,
  /// otherwise a substream of the scenario seed.
  std::uint64_t link_seed(PeerId src, PeerId dst) const;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

/// INI text of the replication fixture (also checked in as
/// scenarios/replication.ini).
extern const std::string_view kReplicationScenario;
Scenario replication_scenario();

/// Programmatic helper: `n` peers with ids 1..n, stream ids equal to the peer
/// ids, every ordered pair joined by `link`.
Scenario mesh_scenario(std::size_t n, const LinkModel& link, double duration_s, std::uint64_t seed,
                       const SessionConfig& base = {});

}  // namespace mevo
