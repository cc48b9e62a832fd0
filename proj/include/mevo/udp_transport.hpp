#pragma once

// IPv4 UDP transport for a live peer. One socket, bound to the local peer's
// port, sends to every remote peer and receives from all of them.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <netinet/in.h>

#include "mevo/peer_engine.hpp"

namespace mevo {

class UdpTransport final : public Transport {
 public:
  /// Resolves every remote host and binds the local port. Throws StartupError.
  explicit UdpTransport(const SessionConfig& config);
  ~UdpTransport() override;

  UdpTransport(const UdpTransport&) = delete;
  UdpTransport& operator=(const UdpTransport&) = delete;

  void send(PeerId to, std::span<const std::uint8_t> datagram) override;

  /// Waits up to timeout_ms for one datagram. Returns its size, or 0 on
  /// timeout. Datagrams longer than `buffer` are truncated (and then fail
  /// to decode).
  std::size_t receive(std::span<std::uint8_t> buffer, int timeout_ms);

  std::uint16_t bound_port() const { return port_; }
  std::uint64_t send_errors() const { return send_errors_; }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::map<PeerId, sockaddr_in> remotes_;
  std::uint64_t send_errors_ = 0;
};

}  // namespace mevo
