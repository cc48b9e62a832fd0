#include "mevo/audio_device.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "mevo/errors.hpp"
#include "mevo/rng.hpp"

namespace mevo {

void SilenceSource::fill(std::int64_t, std::span<std::int16_t> out) {
  std::fill(out.begin(), out.end(), std::int16_t{0});
}

SineSource::SineSource(StreamConfig config, double frequency_hz, double amplitude)
    : config_(config), frequency_hz_(frequency_hz), amplitude_(amplitude) {}

void SineSource::fill(std::int64_t frame_index, std::span<std::int16_t> out) {
  const std::uint32_t channels = config_.channels;
  const std::size_t frames = out.size() / channels;
  for (std::size_t i = 0; i < frames; ++i) {
    // Reduce the phase in integers so long sessions keep full precision.
    const auto f = frame_index + static_cast<std::int64_t>(i);
    const double cycles = std::fmod(static_cast<double>(f) * frequency_hz_ / config_.sample_rate, 1.0);
    const double v = amplitude_ * std::sin(2.0 * std::numbers::pi * cycles);
    const auto s = static_cast<std::int16_t>(std::lround(v * 32767.0));
    for (std::uint32_t c = 0; c < channels; ++c) out[i * channels + c] = s;
  }
}

NoiseSource::NoiseSource(StreamConfig config, std::uint64_t seed, double amplitude)
    : config_(config), seed_(seed), amplitude_(amplitude) {}

void NoiseSource::fill(std::int64_t frame_index, std::span<std::int16_t> out) {
  const std::uint32_t channels = config_.channels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto f = static_cast<std::uint64_t>(frame_index) * channels + i;
    const double u = unit_from_bits(splitmix64(seed_ ^ splitmix64(f))) * 2.0 - 1.0;
    out[i] = static_cast<std::int16_t>(std::lround(u * amplitude_ * 32767.0));
  }
}

FileSource::FileSource(StreamConfig config, const std::filesystem::path& path) : config_(config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StartupError("cannot open audio file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t n = bytes.size() / 2 / config.channels * config.channels;
  if (n == 0) throw StartupError("audio file " + path.string() + " holds no complete frame");
  samples_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = static_cast<std::uint8_t>(bytes[2 * i]);
    const auto hi = static_cast<std::uint8_t>(bytes[2 * i + 1]);
    samples_[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
  }
}

void FileSource::fill(std::int64_t frame_index, std::span<std::int16_t> out) {
  const auto total = static_cast<std::int64_t>(samples_.size());
  auto pos = (frame_index * config_.channels) % total;
  for (auto& s : out) {
    s = samples_[static_cast<std::size_t>(pos)];
    if (++pos == total) pos = 0;
  }
}

std::unique_ptr<SignalSource> make_source(const std::string& spec, const StreamConfig& config) {
  if (spec == "silence") return std::make_unique<SilenceSource>();
  if (spec == "sine") return std::make_unique<SineSource>(config);
  if (spec.rfind("sine:", 0) == 0) return std::make_unique<SineSource>(config, std::stod(spec.substr(5)));
  if (spec.rfind("noise:", 0) == 0) {
    return std::make_unique<NoiseSource>(config, std::stoull(spec.substr(6)));
  }
  if (spec.rfind("file:", 0) == 0) return std::make_unique<FileSource>(config, spec.substr(5));
  throw ConfigError("unknown audio source '" + spec + "'");
}

VirtualAudioDevice::VirtualAudioDevice(std::unique_ptr<SignalSource> source, bool record)
    : source_(std::move(source)), record_(record) {
  if (!source_) source_ = std::make_unique<SilenceSource>();
}

void VirtualAudioDevice::capture(std::int64_t frame_index, std::span<std::int16_t> out) {
  source_->fill(frame_index, out);
  if (record_) captured_.insert(captured_.end(), out.begin(), out.end());
}

void VirtualAudioDevice::render(std::int64_t, const BusBlock<float>& buses) {
  if (!record_) return;
  for (int b = 0; b < kBusCount; ++b) {
    auto& dst = recorded_[b];
    for (Eigen::Index i = 0; i < buses.rows(); ++i) dst.push_back(unit_to_sample(buses(i, b)));
  }
}

}  // namespace mevo
