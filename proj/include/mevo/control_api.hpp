#pragma once

// Local HTTP/JSON control API of a running peer (docs/control-api.md).
// ControlApi is the transport-free request handler; ControlServer serves it
// with cpp-httplib and adds the server-sent telemetry stream.

#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "json.hpp"

#include "mevo/peer_engine.hpp"
#include "mevo/telemetry.hpp"

namespace mevo {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class ControlApi {
 public:
  ControlApi(PeerEngine& engine, TelemetryHub& hub, std::function<double()> uptime_s);

  /// Every endpoint except the /telemetry/stream event stream.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

  nlohmann::json status() const;

 private:
  HttpResponse post_buffer(const nlohmann::json& body) const;
  HttpResponse post_metronome(const nlohmann::json& body) const;
  HttpResponse post_routing(const nlohmann::json& body) const;

  PeerEngine& engine_;
  TelemetryHub& hub_;
  std::function<double()> uptime_s_;
};

nlohmann::json to_json(const TelemetrySample& sample);

/// One SSE event carrying a sample: "event: sample\ndata: {...}\n\n".
std::string sse_event(const TelemetrySample& sample);

class ControlServer {
 public:
  ControlServer(ControlApi& api, TelemetryHub& hub);
  ~ControlServer();

  /// Binds 127.0.0.1:port (0 picks a free port) and starts serving on a
  /// background thread. Throws StartupError when the bind fails.
  void start(int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ControlApi& api_;
  TelemetryHub& hub_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace mevo
