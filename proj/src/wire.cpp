#include "mevo/wire.hpp"

#include <algorithm>
#include <string>

#include "mevo/errors.hpp"

namespace mevo {
namespace {

void put_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}

void put_u32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 24);
  p[1] = static_cast<std::uint8_t>(v >> 16);
  p[2] = static_cast<std::uint8_t>(v >> 8);
  p[3] = static_cast<std::uint8_t>(v);
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void write_header(const PacketHeader& h, std::uint8_t* p) {
  std::copy(kMagic.begin(), kMagic.end(), p);
  p[4] = static_cast<std::uint8_t>(((h.version & 0x0F) << 4) | (h.flags & 0x0F));
  p[5] = h.stream_id;
  put_u16(p + 6, h.seq);
  put_u32(p + 8, h.timestamp_frames);
  put_u32(p + 12, h.send_time_us);
}

DecodeError read_header(std::span<const std::uint8_t> bytes, PacketHeader& h) {
  if (bytes.size() < kHeaderSize) return DecodeError::Truncated;
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) return DecodeError::BadMagic;
  const std::uint8_t* p = bytes.data();
  h.version = static_cast<std::uint8_t>(p[4] >> 4);
  h.flags = static_cast<std::uint8_t>(p[4] & 0x0F);
  if (h.version != kProtocolVersion) return DecodeError::BadVersion;
  h.stream_id = p[5];
  h.seq = get_u16(p + 6);
  h.timestamp_frames = get_u32(p + 8);
  h.send_time_us = get_u32(p + 12);
  return DecodeError::None;
}

Decoded<AudioPacket> decode_audio_body(const PacketHeader& header,
                                       std::span<const std::uint8_t> bytes,
                                       const StreamConfig& config) {
  Decoded<AudioPacket> out;
  if (bytes.size() != config.datagram_bytes()) {
    out.error = DecodeError::BadLength;
    return out;
  }
  AudioPacket packet;
  packet.header = header;
  packet.payload.resize(config.samples_per_packet());
  const std::uint8_t* p = bytes.data() + kHeaderSize;
  for (std::size_t i = 0; i < packet.payload.size(); ++i) {
    packet.payload[i] = static_cast<std::int16_t>(get_u16(p + 2 * i));
  }
  out.value = std::move(packet);
  return out;
}

Decoded<ProbePacket> decode_probe_body(const PacketHeader& header,
                                       std::span<const std::uint8_t> bytes) {
  Decoded<ProbePacket> out;
  if (bytes.size() != kHeaderSize + kProbePayloadSize) {
    out.error = DecodeError::BadLength;
    return out;
  }
  const std::uint8_t* p = bytes.data() + kHeaderSize;
  if (p[0] != static_cast<std::uint8_t>(ProbeKind::Ping) &&
      p[0] != static_cast<std::uint8_t>(ProbeKind::Pong)) {
    out.error = DecodeError::BadProbe;
    return out;
  }
  ProbePacket probe;
  probe.header = header;
  probe.kind = static_cast<ProbeKind>(p[0]);
  probe.responder_recv_us = get_u32(p + 4);
  out.value = probe;
  return out;
}

}  // namespace

void StreamConfig::validate() const {
  if (sample_rate == 0) throw ConfigError("sample_rate must be positive");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (frames_per_packet < 1 || frames_per_packet > 1024) {
    throw ConfigError("frames_per_packet must be in [1, 1024]");
  }
  if (datagram_bytes() > kMaxDatagram) {
    throw ConfigError("datagram of " + std::to_string(datagram_bytes()) +
                      " bytes exceeds the 1472-byte UDP payload limit");
  }
}

std::string_view to_string(DecodeError e) {
  switch (e) {
    case DecodeError::None: return "none";
    case DecodeError::Truncated: return "truncated";
    case DecodeError::BadMagic: return "bad_magic";
    case DecodeError::BadVersion: return "bad_version";
    case DecodeError::BadLength: return "bad_length";
    case DecodeError::BadProbe: return "bad_probe";
  }
  return "unknown";
}

std::size_t encode_into(const AudioPacket& packet, const StreamConfig& config,
                        std::span<std::uint8_t> out) {
  if (packet.payload.size() != config.samples_per_packet()) {
    throw ConfigError("payload has " + std::to_string(packet.payload.size()) +
                      " samples, stream config expects " +
                      std::to_string(config.samples_per_packet()));
  }
  const std::size_t total = config.datagram_bytes();
  if (out.size() < total) throw ConfigError("output buffer too small for datagram");
  if (packet.header.flags > 0x0F || (packet.header.flags & flags::kControl)) {
    throw ConfigError("audio packets may only carry flag bits 0, 2 and 3");
  }
  write_header(packet.header, out.data());
  std::uint8_t* p = out.data() + kHeaderSize;
  for (std::size_t i = 0; i < packet.payload.size(); ++i) {
    put_u16(p + 2 * i, static_cast<std::uint16_t>(packet.payload[i]));
  }
  return total;
}

std::vector<std::uint8_t> encode(const AudioPacket& packet, const StreamConfig& config) {
  std::vector<std::uint8_t> bytes(config.datagram_bytes());
  encode_into(packet, config, bytes);
  return bytes;
}

std::vector<std::uint8_t> encode(const ProbePacket& probe) {
  std::vector<std::uint8_t> bytes(kHeaderSize + kProbePayloadSize, 0);
  PacketHeader h = probe.header;
  h.flags |= flags::kControl;
  write_header(h, bytes.data());
  bytes[kHeaderSize] = static_cast<std::uint8_t>(probe.kind);
  put_u32(bytes.data() + kHeaderSize + 4, probe.responder_recv_us);
  return bytes;
}

Decoded<AudioPacket> decode(std::span<const std::uint8_t> bytes, const StreamConfig& config) {
  PacketHeader header;
  if (auto err = read_header(bytes, header); err != DecodeError::None) {
    return {std::nullopt, err};
  }
  if (header.flags & flags::kControl) return {std::nullopt, DecodeError::BadLength};
  return decode_audio_body(header, bytes, config);
}

Decoded<Datagram> decode_datagram(std::span<const std::uint8_t> bytes,
                                  const StreamConfig& config) {
  PacketHeader header;
  if (auto err = read_header(bytes, header); err != DecodeError::None) {
    return {std::nullopt, err};
  }
  if (header.flags & flags::kControl) {
    auto probe = decode_probe_body(header, bytes);
    if (!probe) return {std::nullopt, probe.error};
    return {Datagram{std::move(*probe.value)}, DecodeError::None};
  }
  auto audio = decode_audio_body(header, bytes, config);
  if (!audio) return {std::nullopt, audio.error};
  return {Datagram{std::move(*audio.value)}, DecodeError::None};
}

}  // namespace mevo
