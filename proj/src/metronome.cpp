#include "mevo/metronome.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mevo/errors.hpp"

namespace mevo {
namespace {

void check_bpm(std::uint32_t bpm) {
  if (bpm < kMinBpm || bpm > kMaxBpm) {
    throw ConfigError("bpm " + std::to_string(bpm) + " outside [20, 300]");
  }
}

// Index of the latest click whose onset is at or before `frame`.
std::int64_t click_at_or_before(std::int64_t frame, std::uint32_t bpm, std::uint32_t rate) {
  const std::int64_t per_minute = std::int64_t{60} * rate;
  std::int64_t k = frame * bpm / per_minute;
  while (click_onset(k + 1, bpm, rate) <= frame) ++k;
  while (k > 0 && click_onset(k, bpm, rate) > frame) --k;
  return k;
}

}  // namespace

void MetronomeSettings::validate() const {
  check_bpm(bpm);
  if (beats_per_bar < 1 || beats_per_bar > 32) throw ConfigError("beats_per_bar must be in [1, 32]");
}

std::int64_t click_onset(std::int64_t k, std::uint32_t bpm, std::uint32_t sample_rate) {
  const std::int64_t num = 2 * k * 60 * std::int64_t{sample_rate} + bpm;
  return num / (2 * std::int64_t{bpm});
}

void metronome_block(std::uint32_t bpm, std::uint32_t beats_per_bar, std::int64_t frame_index,
                     const StreamConfig& config, std::span<float> out) {
  check_bpm(bpm);
  const std::uint32_t rate = config.sample_rate;
  const std::uint32_t channels = config.channels;
  const auto burst = static_cast<std::int64_t>(std::llround(kClickSeconds * rate));
  const auto fade = static_cast<std::int64_t>(std::llround(kClickFadeSeconds * rate));
  const std::size_t frames = out.size() / channels;

  for (std::size_t i = 0; i < frames; ++i) {
    const std::int64_t f = frame_index + static_cast<std::int64_t>(i);
    float value = 0.0F;
    if (f >= 0) {
      const std::int64_t k = click_at_or_before(f, bpm, rate);
      const std::int64_t offset = f - click_onset(k, bpm, rate);
      if (offset >= 0 && offset < burst) {
        const double amp = (k % beats_per_bar == 0) ? kDownbeatAmplitude : kBeatAmplitude;
        const double env =
            offset < burst - fade ? 1.0 : static_cast<double>(burst - offset) / static_cast<double>(fade);
        const double phase = 2.0 * std::numbers::pi * kClickHz * static_cast<double>(offset) / rate;
        value = static_cast<float>(amp * env * std::sin(phase));
      }
    }
    for (std::uint32_t c = 0; c < channels; ++c) out[i * channels + c] = value;
  }
}

std::vector<float> metronome_block(std::uint32_t bpm, std::uint32_t beats_per_bar,
                                   std::int64_t frame_index, std::uint32_t n_frames,
                                   const StreamConfig& config) {
  std::vector<float> out(std::size_t{n_frames} * config.channels);
  metronome_block(bpm, beats_per_bar, frame_index, config, out);
  return out;
}

}  // namespace mevo
