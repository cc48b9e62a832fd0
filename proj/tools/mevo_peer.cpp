// mevo-peer: run one peer of a live session.
//
//   mevo-peer --config <session.ini> [--virtual-audio sine|noise:<seed>|file:<path>]
//             [--control-port N] [--telemetry-log <path>] [--duration S]

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "mevo/errors.hpp"
#include "mevo/realtime_session.hpp"

namespace {
mevo::RealtimeSession* g_session = nullptr;
extern "C" void on_signal(int) {
  if (g_session) g_session->request_stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Networked music performance peer"};
  std::string config_path;
  std::string audio = "sine";
  int control_port = -1;
  std::string telemetry_log;
  double duration = 0;
  app.add_option("--config", config_path, "Session config file")->required();
  app.add_option("--virtual-audio", audio, "Signal source: sine, sine:<hz>, noise:<seed>, silence, file:<path>");
  app.add_option("--control-port", control_port, "Control API port on 127.0.0.1 (0 disables)");
  app.add_option("--telemetry-log", telemetry_log, "Telemetry CSV path");
  app.add_option("--duration", duration, "Stop after this many seconds (default: run until stopped)");
  CLI11_PARSE(app, argc, argv);

  try {
    auto config = mevo::load_session_config(config_path);
    if (control_port >= 0) config.control_port = static_cast<std::uint16_t>(control_port);
    if (!telemetry_log.empty()) config.telemetry_log = telemetry_log;
    mevo::VirtualAudioDevice device(mevo::make_source(audio, config.stream));
    mevo::RealtimeSession session(config, device);
    g_session = &session;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "mevo-peer: peer " << config.local_peer_id << " on UDP " << session.udp_port() << '\n';
    mevo::RealtimeOptions opt;
    if (duration > 0) opt.duration_s = duration;
    session.run(opt);
    g_session = nullptr;
    if (!session.telemetry_error().empty()) std::cerr << "mevo-peer: telemetry: " << session.telemetry_error() << '\n';
    return 0;
  } catch (const mevo::ConfigError& e) {
    std::cerr << "mevo-peer: config: " << e.what() << '\n';
    return 2;
  } catch (const mevo::StartupError& e) {
    std::cerr << "mevo-peer: startup: " << e.what() << '\n';
    return 3;
  }
}
