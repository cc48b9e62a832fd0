#include "mevo/realtime_session.hpp"

#include <thread>

#include "mevo/control_api.hpp"

namespace mevo {

RealtimeSession::RealtimeSession(SessionConfig config, AudioDevice& device)
    : config_((config.validate(), std::move(config))),
      transport_(config_),
      engine_(config_, device, transport_),
      epoch_(std::chrono::steady_clock::now()) {}

std::int64_t RealtimeSession::now_us() const {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - epoch_).count();
}

void RealtimeSession::run(const RealtimeOptions& options) {
  using clock = std::chrono::steady_clock;
  epoch_ = clock::now();
  const auto deadline = options.duration_s
                            ? std::optional(epoch_ + std::chrono::duration_cast<clock::duration>(
                                                         std::chrono::duration<double>(*options.duration_s)))
                            : std::nullopt;
  const auto finished = [&] { return engine_.stopped() || (deadline && clock::now() >= *deadline); };

  TelemetryHub hub;
  std::optional<TelemetryWriter> writer;
  if (config_.telemetry_log.empty()) {
    writer.emplace();
  } else {
    writer.emplace(config_.telemetry_log, config_.stream.sample_rate, config_.local_peer_id);
  }
  if (!writer->error().empty()) hub.set_error(writer->error());

  std::optional<ControlApi> api;
  std::optional<ControlServer> server;
  if (config_.control_port != 0) {
    api.emplace(engine_, hub, [this] { return static_cast<double>(now_us()) / 1e6; });
    server.emplace(*api, hub);
    server->start(config_.control_port);
    control_port_ = server->port();
  }

  std::thread ingest([&] {
    std::vector<std::uint8_t> buf(kMaxDatagram + 64);
    while (!finished()) {
      const auto n = transport_.receive(buf, 50);
      if (n > 0) engine_.on_datagram(std::span(buf.data(), n), now_us());
    }
  });

  std::thread audio([&] {
    const auto period = std::chrono::duration<double>(config_.stream.packet_period_us() / 1e6);
    std::int64_t k = 0;
    while (!finished()) {
      engine_.run_cycle(now_us());
      ++k;
      const auto next = epoch_ + std::chrono::duration_cast<clock::duration>(period * static_cast<double>(k));
      // after a stall, skip missed cycles rather than bursting to catch up
      if (next < clock::now() - std::chrono::milliseconds(100)) {
        k = static_cast<std::int64_t>((clock::now() - epoch_) / period);
        continue;
      }
      std::this_thread::sleep_until(next);
    }
  });

  engine_.send_probes(now_us());
  // a run of duration d seconds ends with the sample at t = d
  for (std::int64_t j = 1;; ++j) {
    const auto at = epoch_ + std::chrono::seconds(j);
    if (deadline && at > *deadline) break;
    while (!engine_.stopped() && clock::now() < at) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    if (engine_.stopped()) break;
    const auto now = now_us();
    auto sample = engine_.sample(now, static_cast<double>(j));
    writer->append(sample);
    if (!writer->error().empty()) hub.set_error(writer->error());
    hub.publish(std::move(sample));
    engine_.send_probes(now);
  }
  engine_.stop();
  audio.join();
  ingest.join();
  if (server) server->stop();
  telemetry_error_ = writer->error();
}

}  // namespace mevo
