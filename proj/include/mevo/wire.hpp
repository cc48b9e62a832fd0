#pragma once

// UDP datagram layout shared by the peer engine and the simulator.
//
//   offset  size  field
//   0       4     magic "MEVO"
//   4       1     version (high nibble, = 1) | flags (low nibble)
//   5       1     stream_id
//   6       2     seq            (wrapping)
//   8       4     timestamp_frames (wrapping, first payload frame)
//   12      4     send_time_us   (low 32 bits of sender clock, wrapping)
//   16      ...   payload
//
// All multi-byte fields are big-endian. Audio payloads carry interleaved
// signed 16-bit big-endian PCM; probe payloads are a fixed 8-byte block.
// See docs/wire-format.md.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace mevo {

using SeqNo = std::uint16_t;

inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kMaxDatagram = 1472;
inline constexpr std::array<std::uint8_t, 4> kMagic = {'M', 'E', 'V', 'O'};
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kProbePayloadSize = 8;

enum class WireFormat : std::uint8_t { S16BE };

namespace flags {
inline constexpr std::uint8_t kMetronome = 0x1;
inline constexpr std::uint8_t kControl = 0x2;
}  // namespace flags

struct StreamConfig {
  std::uint32_t sample_rate = 44100;
  std::uint32_t channels = 1;
  std::uint32_t frames_per_packet = 128;
  WireFormat wire_format = WireFormat::S16BE;

  std::size_t samples_per_packet() const { return std::size_t{frames_per_packet} * channels; }
  std::size_t payload_bytes() const { return samples_per_packet() * 2; }
  std::size_t datagram_bytes() const { return kHeaderSize + payload_bytes(); }
  /// Duration of one packet in microseconds (not integral in general).
  double packet_period_us() const { return 1e6 * frames_per_packet / sample_rate; }

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;

  bool operator==(const StreamConfig&) const = default;
};

struct PacketHeader {
  std::uint8_t version = kProtocolVersion;
  std::uint8_t stream_id = 0;
  std::uint8_t flags = 0;
  SeqNo seq = 0;
  std::uint32_t timestamp_frames = 0;
  std::uint32_t send_time_us = 0;

  bool operator==(const PacketHeader&) const = default;
};

struct AudioPacket {
  PacketHeader header;
  std::vector<std::int16_t> payload;  // interleaved, frames_per_packet * channels

  bool operator==(const AudioPacket&) const = default;
};

enum class ProbeKind : std::uint8_t { Ping = 1, Pong = 2 };

/// RTT probe. A ping carries the prober's clock in header.send_time_us; the
/// pong echoes it unchanged and adds the responder's receive time.
struct ProbePacket {
  PacketHeader header;
  ProbeKind kind = ProbeKind::Ping;
  std::uint32_t responder_recv_us = 0;

  bool operator==(const ProbePacket&) const = default;
};

using Datagram = std::variant<AudioPacket, ProbePacket>;

enum class DecodeError : std::uint8_t {
  None,
  Truncated,       // shorter than a header
  BadMagic,
  BadVersion,
  BadLength,       // payload size does not match the stream config
  BadProbe,        // control packet with an unknown kind
};

std::string_view to_string(DecodeError e);

template <typename T>
struct Decoded {
  std::optional<T> value;
  DecodeError error = DecodeError::None;

  explicit operator bool() const { return value.has_value(); }
};

std::vector<std::uint8_t> encode(const AudioPacket& packet, const StreamConfig& config);
std::vector<std::uint8_t> encode(const ProbePacket& probe);

/// Writes into a caller-provided buffer of at least config.datagram_bytes();
/// returns the number of bytes written. Throws ConfigError on payload mismatch.
std::size_t encode_into(const AudioPacket& packet, const StreamConfig& config,
                        std::span<std::uint8_t> out);

/// Decodes an audio datagram. Control datagrams are rejected as BadLength.
Decoded<AudioPacket> decode(std::span<const std::uint8_t> bytes, const StreamConfig& config);
/// Decodes either datagram kind, dispatching on the control flag.
Decoded<Datagram> decode_datagram(std::span<const std::uint8_t> bytes, const StreamConfig& config);

/// Signed distance d in [-32768, 32767] with b == a + d (mod 2^16).
/// Exactly half the range is reported as -32768 ("older").
constexpr std::int32_t seq_distance(SeqNo a, SeqNo b) {
  return static_cast<std::int16_t>(static_cast<std::uint16_t>(b - a));
}

/// Signed distance for the 32-bit wrapping microsecond field.
constexpr std::int64_t time32_distance(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::int32_t>(b - a);
}

}  // namespace mevo
