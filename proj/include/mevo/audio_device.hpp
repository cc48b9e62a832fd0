#pragma once

// Audio device abstraction. The engine calls capture() and render() once per
// cycle of frames_per_packet frames; who drives the cycle (a real-time thread
// or the simulator's event queue) is outside the device.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mevo/routing.hpp"
#include "mevo/wire.hpp"

namespace mevo {

class SignalSource {
 public:
  virtual ~SignalSource() = default;
  /// Fills frames [frame_index, frame_index + out.size()/channels).
  virtual void fill(std::int64_t frame_index, std::span<std::int16_t> out) = 0;
};

class SilenceSource final : public SignalSource {
 public:
  void fill(std::int64_t, std::span<std::int16_t> out) override;
};

class SineSource final : public SignalSource {
 public:
  SineSource(StreamConfig config, double frequency_hz = 440.0, double amplitude = 0.5);
  void fill(std::int64_t frame_index, std::span<std::int16_t> out) override;

 private:
  StreamConfig config_;
  double frequency_hz_;
  double amplitude_;
};

/// Deterministic white noise, a pure function of (seed, frame index).
class NoiseSource final : public SignalSource {
 public:
  NoiseSource(StreamConfig config, std::uint64_t seed, double amplitude = 0.5);
  void fill(std::int64_t frame_index, std::span<std::int16_t> out) override;

 private:
  StreamConfig config_;
  std::uint64_t seed_;
  double amplitude_;
};

/// Raw interleaved signed 16-bit little-endian PCM, looped.
class FileSource final : public SignalSource {
 public:
  FileSource(StreamConfig config, const std::filesystem::path& path);
  void fill(std::int64_t frame_index, std::span<std::int16_t> out) override;

 private:
  StreamConfig config_;
  std::vector<std::int16_t> samples_;
};

/// Parses "sine", "sine:<hz>", "noise:<seed>", "silence" or "file:<path>".
std::unique_ptr<SignalSource> make_source(const std::string& spec, const StreamConfig& config);

class AudioDevice {
 public:
  virtual ~AudioDevice() = default;
  virtual void capture(std::int64_t frame_index, std::span<std::int16_t> out) = 0;
  virtual void render(std::int64_t frame_index, const BusBlock<float>& buses) = 0;
};

/// Device backed by a signal source; optionally records both output buses as
/// 16-bit samples.
class VirtualAudioDevice final : public AudioDevice {
 public:
  explicit VirtualAudioDevice(std::unique_ptr<SignalSource> source, bool record = false);

  void capture(std::int64_t frame_index, std::span<std::int16_t> out) override;
  void render(std::int64_t frame_index, const BusBlock<float>& buses) override;

  const std::vector<std::int16_t>& recorded(Bus bus) const {
    return recorded_[static_cast<int>(bus)];
  }
  const std::vector<std::int16_t>& captured() const { return captured_; }

 private:
  std::unique_ptr<SignalSource> source_;
  bool record_;
  std::vector<std::int16_t> captured_;
  std::vector<std::int16_t> recorded_[kBusCount];
};

}  // namespace mevo
