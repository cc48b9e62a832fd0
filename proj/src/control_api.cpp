#include "mevo/control_api.hpp"

#include "httplib.h"
#include "mevo/errors.hpp"

namespace mevo {
using nlohmann::json;

namespace {

HttpResponse error(int status, const std::string& code, const std::string& message) {
  return {status, json{{"error", {{"code", code}, {"message", message}}}}.dump()};
}

HttpResponse ok(json body) { return {200, body.dump()}; }

json row_json(const TelemetryRow& r) {
  return {{"peer_id", r.peer_id},
          {"stream_id", r.stream_id},
          {"rtt_ms", r.rtt_ms ? json(*r.rtt_ms) : json(nullptr)},
          {"buffer_target_ms", r.buffer_target_ms},
          {"buffer_occupancy_ms", r.buffer_occupancy_ms},
          {"frames_played", r.frames_played},
          {"frames_lost", r.frames_lost},
          {"frames_late", r.frames_late},
          {"frames_concealed", r.frames_concealed},
          {"frames_skipped", r.frames_skipped},
          {"dgrams_sent", r.dgrams_sent},
          {"dgrams_recv", r.dgrams_recv},
          {"dgrams_malformed", r.dgrams_malformed}};
}

// Rejects keys outside `allowed`; returns an error response or nothing.
std::optional<HttpResponse> check_keys(const json& body, std::initializer_list<const char*> allowed) {
  if (!body.is_object()) return error(400, "invalid_body", "request body must be a JSON object");
  if (body.empty()) return error(400, "empty_update", "request body has no fields");
  for (const auto& [key, _] : body.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) return error(400, "unknown_field", "unknown field '" + key + "'");
  }
  return std::nullopt;
}

template <typename T>
std::optional<T> get_uint(const json& body, const char* key) {
  if (!body.contains(key)) return std::nullopt;
  const auto& v = body.at(key);
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > std::numeric_limits<T>::max()) {
    throw MutationError("invalid_type", std::string(key) + " must be a non-negative integer");
  }
  return v.get<T>();
}

std::optional<double> get_number(const json& body, const char* key) {
  if (!body.contains(key)) return std::nullopt;
  const auto& v = body.at(key);
  if (!v.is_number()) throw MutationError("invalid_type", std::string(key) + " must be a number");
  return v.get<double>();
}

std::optional<bool> get_bool(const json& body, const char* key) {
  if (!body.contains(key)) return std::nullopt;
  const auto& v = body.at(key);
  if (!v.is_boolean()) throw MutationError("invalid_type", std::string(key) + " must be a boolean");
  return v.get<bool>();
}

HttpResponse rejected(const MutationError& e) {
  const int status = e.code() == "metronome_unavailable" || e.code() == "session_stopped" ? 409 : 400;
  return error(status, e.code(), e.what());
}

}  // namespace

json to_json(const TelemetrySample& sample) {
  json rows = json::array();
  for (const auto& r : sample.rows) rows.push_back(row_json(r));
  return {{"index", sample.index}, {"t_s", sample.t_s}, {"streams", rows}};
}

std::string sse_event(const TelemetrySample& sample) {
  return "event: sample\nid: " + std::to_string(sample.index) + "\ndata: " + to_json(sample).dump() + "\n\n";
}

ControlApi::ControlApi(PeerEngine& engine, TelemetryHub& hub, std::function<double()> uptime_s)
    : engine_(engine), hub_(hub), uptime_s_(std::move(uptime_s)) {}

json ControlApi::status() const {
  const auto st = engine_.state();
  const auto& c = st.config;
  json peers = json::array();
  for (const auto& p : c.peers) {
    peers.push_back({{"id", p.id},
                     {"host", p.host},
                     {"port", p.port},
                     {"stream_id", p.stream_id},
                     {"site", p.site},
                     {"local", p.id == c.local_peer_id}});
  }
  json routing = json::array();
  for (const auto& s : st.routing.sources()) {
    routing.push_back({{"source", to_string(s)},
                       {"monitor", st.routing.gain(s, Bus::Monitor)},
                       {"audience", st.routing.gain(s, Bus::Audience)}});
  }
  const auto& j = c.jitter;
  const auto& m = c.metronome;
  const auto err = hub_.error();
  return {{"state", st.stopped ? "stopped" : "running"},
          {"local_peer_id", c.local_peer_id},
          {"uptime_s", uptime_s_ ? uptime_s_() : 0.0},
          {"cycles", engine_.cycles()},
          {"peers", peers},
          {"stream",
           {{"sample_rate", c.stream.sample_rate},
            {"channels", c.stream.channels},
            {"frames_per_packet", c.stream.frames_per_packet},
            {"wire_format", "s16be"}}},
          {"buffer",
           {{"window_seconds", j.window_seconds},
            {"percentile", j.percentile},
            {"safety_margin_frames", j.safety_margin_frames},
            {"min_target_frames", j.min_target_frames},
            {"max_target_frames", j.max_target_frames},
            {"late_timeout_ms", j.late_timeout_ms}}},
          {"metronome",
           {{"available", st.metronome_stream},
            {"enabled", st.metronome_stream && m.enabled},
            {"bpm", m.bpm},
            {"beats_per_bar", m.beats_per_bar},
            {"owner_peer_id", m.owner_peer_id},
            {"audience_muting", st.routing.metronome_audience_muted()},
            {"stream_id", m.stream_id}}},
          {"routing", routing},
          {"telemetry_error", err.empty() ? json(nullptr) : json(err)}};
}

HttpResponse ControlApi::handle(const std::string& method, const std::string& path, const std::string& body) const {
  const bool get = method == "GET";
  const bool post = method == "POST";
  if (path == "/status") return get ? ok(status()) : error(405, "method_not_allowed", "use GET");
  if (path == "/telemetry/latest") {
    if (!get) return error(405, "method_not_allowed", "use GET");
    const auto s = hub_.latest();
    if (!s) return error(404, "no_sample", "no telemetry sample yet");
    return ok(to_json(*s));
  }
  if (path != "/buffer" && path != "/metronome" && path != "/routing" && path != "/session/stop") {
    return error(404, "not_found", "no endpoint " + path);
  }
  if (!post) return error(405, "method_not_allowed", "use POST");
  if (path == "/session/stop") {
    engine_.stop();
    return ok({{"ok", true}, {"state", "stopped"}});
  }
  json parsed;
  try {
    parsed = json::parse(body);
  } catch (const json::parse_error& e) {
    return error(400, "invalid_json", e.what());
  }
  try {
    if (path == "/buffer") return post_buffer(parsed);
    if (path == "/metronome") return post_metronome(parsed);
    return post_routing(parsed);
  } catch (const MutationError& e) {
    return rejected(e);
  }
}

HttpResponse ControlApi::post_buffer(const json& body) const {
  if (auto bad = check_keys(body, {"percentile", "max_target_frames", "min_target_frames", "safety_margin_frames",
                                   "window_seconds"})) {
    return *bad;
  }
  BufferUpdate u;
  u.percentile = get_number(body, "percentile");
  u.max_target_frames = get_uint<std::uint32_t>(body, "max_target_frames");
  u.min_target_frames = get_uint<std::uint32_t>(body, "min_target_frames");
  u.safety_margin_frames = get_uint<std::uint32_t>(body, "safety_margin_frames");
  u.window_seconds = get_number(body, "window_seconds");
  engine_.submit(u);
  return ok({{"ok", true}, {"buffer", status()["buffer"]}});
}

HttpResponse ControlApi::post_metronome(const json& body) const {
  if (auto bad = check_keys(body, {"enabled", "bpm", "beats_per_bar"})) return *bad;
  MetronomeUpdate u;
  u.enabled = get_bool(body, "enabled");
  u.bpm = get_uint<std::uint32_t>(body, "bpm");
  u.beats_per_bar = get_uint<std::uint32_t>(body, "beats_per_bar");
  engine_.submit(u);
  return ok({{"ok", true}, {"metronome", status()["metronome"]}});
}

HttpResponse ControlApi::post_routing(const json& body) const {
  if (auto bad = check_keys(body, {"source", "bus", "gain"})) return *bad;
  if (!body.contains("source") || !body.contains("bus") || !body.contains("gain")) {
    return error(400, "missing_field", "source, bus and gain are required");
  }
  if (!body["source"].is_string() || !body["bus"].is_string()) {
    return error(400, "invalid_type", "source and bus must be strings");
  }
  const auto source = parse_source(body["source"].get<std::string>());
  if (!source) return error(400, "unknown_source", "cannot parse source " + body["source"].get<std::string>());
  const auto bus = parse_bus(body["bus"].get<std::string>());
  if (!bus) return error(400, "unknown_bus", "bus must be monitor or audience");
  const auto gain = get_number(body, "gain");
  engine_.submit(RoutingUpdate{*source, *bus, static_cast<float>(*gain)});
  return ok({{"ok", true}, {"routing", status()["routing"]}});
}

struct ControlServer::Impl {
  httplib::Server server;
};

ControlServer::ControlServer(ControlApi& api, TelemetryHub& hub)
    : impl_(std::make_unique<Impl>()), api_(api), hub_(hub) {}

ControlServer::~ControlServer() { stop(); }

void ControlServer::start(int port) {
  auto& srv = impl_->server;
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = api_.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.Get("/telemetry/stream", [this](const httplib::Request&, httplib::Response& res) {
    res.set_header("Cache-Control", "no-cache");
    auto last = std::make_shared<std::uint64_t>(0);
    res.set_chunked_content_provider("text/event-stream", [this, last](std::size_t, httplib::DataSink& sink) {
      if (hub_.closed()) {
        sink.done();
        return true;
      }
      if (const auto s = hub_.wait_newer(*last, 1500)) {
        *last = s->index;
        const auto event = sse_event(*s);
        return sink.write(event.data(), event.size());
      }
      const std::string keepalive = ": keepalive\n\n";
      return sink.write(keepalive.data(), keepalive.size());
    });
  });
  srv.Get(R"(/.*)", forward);
  srv.Post(R"(/.*)", forward);
  srv.Put(R"(/.*)", forward);
  srv.Delete(R"(/.*)", forward);

  if (port == 0) {
    port_ = srv.bind_to_any_port("127.0.0.1");
    if (port_ < 0) throw StartupError("control API: cannot bind a port on 127.0.0.1");
  } else {
    if (!srv.bind_to_port("127.0.0.1", port)) {
      throw StartupError("control API: cannot bind 127.0.0.1:" + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
}

void ControlServer::stop() {
  if (thread_.joinable()) {
    hub_.close();
    impl_->server.stop();
    thread_.join();
  }
}

}  // namespace mevo
