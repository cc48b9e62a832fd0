#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mevo/wire.hpp"

namespace mevo {

struct MetronomeSettings {
  bool enabled = false;
  std::uint32_t bpm = 120;
  std::uint32_t beats_per_bar = 4;
  std::uint32_t owner_peer_id = 0;
  bool audience_muting = true;
  std::uint8_t stream_id = 255;

  void validate() const;
  bool operator==(const MetronomeSettings&) const = default;
};

inline constexpr std::uint32_t kMinBpm = 20;
inline constexpr std::uint32_t kMaxBpm = 300;
inline constexpr double kClickHz = 1000.0;
inline constexpr double kClickSeconds = 0.020;
inline constexpr double kClickFadeSeconds = 0.005;
inline constexpr float kDownbeatAmplitude = 0.8F;
inline constexpr float kBeatAmplitude = 0.5F;

/// Frame of the k-th click: round(k * 60 * sample_rate / bpm), halves up.
std::int64_t click_onset(std::int64_t k, std::uint32_t bpm, std::uint32_t sample_rate);

/// Renders frames [frame_index, frame_index + n) of the click track into
/// `out` (n * channels interleaved samples in [-1, 1]). Deterministic in
/// frame_index. Throws ConfigError when bpm is outside [20, 300].
void metronome_block(std::uint32_t bpm, std::uint32_t beats_per_bar, std::int64_t frame_index,
                     const StreamConfig& config, std::span<float> out);

std::vector<float> metronome_block(std::uint32_t bpm, std::uint32_t beats_per_bar,
                                   std::int64_t frame_index, std::uint32_t n_frames,
                                   const StreamConfig& config);

}  // namespace mevo
