#include "mevo/udp_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace mevo {
namespace {

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (const int rc = getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || res == nullptr) {
    throw StartupError("cannot resolve " + host + ": " + gai_strerror(rc));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof addr);
  freeaddrinfo(res);
  addr.sin_port = htons(port);
  return addr;
}

}  // namespace

UdpTransport::UdpTransport(const SessionConfig& config) {
  for (const auto& p : config.remote_peers()) remotes_[p.id] = resolve(p.host, p.port);

  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw StartupError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in local{};
  local.sin_family = AF_INET;
  local.sin_addr.s_addr = htonl(INADDR_ANY);
  local.sin_port = htons(config.local().port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&local), sizeof local) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw StartupError("cannot bind UDP port " + std::to_string(config.local().port) + ": " + err);
  }
  socklen_t len = sizeof local;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&local), &len);
  port_ = ntohs(local.sin_port);
}

UdpTransport::~UdpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

void UdpTransport::send(PeerId to, std::span<const std::uint8_t> datagram) {
  const auto it = remotes_.find(to);
  if (it == remotes_.end()) return;
  const auto n = ::sendto(fd_, datagram.data(), datagram.size(), MSG_DONTWAIT,
                          reinterpret_cast<const sockaddr*>(&it->second), sizeof it->second);
  if (n < 0) ++send_errors_;
}

std::size_t UdpTransport::receive(std::span<std::uint8_t> buffer, int timeout_ms) {
  pollfd p{fd_, POLLIN, 0};
  if (::poll(&p, 1, timeout_ms) <= 0) return 0;
  const auto n = ::recv(fd_, buffer.data(), buffer.size(), 0);
  return n > 0 ? static_cast<std::size_t>(n) : 0;
}

}  // namespace mevo
