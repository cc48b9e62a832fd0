#include <deque>

#include "doctest.h"
#include "json.hpp"
#include "mevo/control_api.hpp"
#include "mevo/peer_engine.hpp"

using namespace mevo;
using nlohmann::json;

namespace {

// Datagrams queue per destination until the test delivers them.
struct QueueTransport : Transport {
  std::deque<std::pair<PeerId, std::vector<std::uint8_t>>> sent;
  void send(PeerId to, std::span<const std::uint8_t> d) override { sent.emplace_back(to, std::vector(d.begin(), d.end())); }
};

SessionConfig two_peer(PeerId local, bool metronome = false) {
  SessionConfig c;
  c.local_peer_id = local;
  c.peers = {{1, "127.0.0.1", 0, 1, "A"}, {2, "127.0.0.1", 0, 2, "B"}};
  c.metronome.enabled = metronome;
  c.metronome.owner_peer_id = 1;
  return c;
}

struct Pair {
  QueueTransport ta, tb;
  VirtualAudioDevice da{make_source("noise:1", {}), true};
  VirtualAudioDevice db{make_source("noise:2", {}), true};
  PeerEngine a, b;
  explicit Pair(bool metronome = false) : a(two_peer(1, metronome), da, ta), b(two_peer(2, metronome), db, tb) {}

  // deliver everything queued, a -> b and b -> a
  void flush(std::int64_t now_us) {
    for (auto& [to, d] : ta.sent) b.on_datagram(d, now_us);
    for (auto& [to, d] : tb.sent) a.on_datagram(d, now_us);
    ta.sent.clear();
    tb.sent.clear();
  }
};

}  // namespace

TEST_CASE("two engines exchange audio bit-exactly") {
  Pair p;
  const std::int64_t period = 2902;
  for (int k = 0; k < 200; ++k) {
    p.a.run_cycle(k * period);
    p.b.run_cycle(k * period);
    p.flush(k * period + 10);
  }
  const auto& sent = p.da.captured();
  auto& buf = p.b.stream(0).buffer();
  CHECK(buf.counters().frames_lost == 0);
  CHECK(buf.counters().frames_played >= 190 * 128);
  // b's audience bus carries a's capture (gain 1) delayed by whole packets
  const auto& heard = p.db.recorded(Bus::Audience);
  std::size_t lag = 0;
  while (lag < 1024 && heard[lag] == 0) ++lag;
  REQUIRE(lag % 128 == 0);
  for (std::size_t i = lag; i < heard.size(); ++i) REQUIRE(heard[i] == sent[i - lag]);
  CHECK(p.a.peer_counters(2).audio_sent == 200);
  CHECK(p.b.peer_counters(1).dgrams_recv == 200);
}

TEST_CASE("probes measure the round trip") {
  Pair p;
  p.a.send_probes(1000);
  REQUIRE(p.ta.sent.size() == 1);
  p.b.on_datagram(p.ta.sent.front().second, 21000);
  p.ta.sent.clear();
  REQUIRE(p.tb.sent.size() == 1);
  p.a.on_datagram(p.tb.sent.front().second, 41500);
  p.tb.sent.clear();
  const auto s = p.a.sample(42000, 1.0);
  REQUIRE(s.rows.size() == 1);
  REQUIRE(s.rows[0].rtt_ms);
  CHECK(*s.rows[0].rtt_ms == doctest::Approx(40.5));
  CHECK(s.rows[0].dgrams_sent == 1);
  CHECK(s.rows[0].dgrams_recv == 1);
  // no new measurement during the next second
  CHECK_FALSE(p.a.sample(1'042'000, 2.0).rows[0].rtt_ms);
}

TEST_CASE("malformed and unknown-stream datagrams are counted") {
  Pair p;
  const std::vector<std::uint8_t> junk{1, 2, 3};
  p.a.on_datagram(junk, 0);
  p.b.run_cycle(0);
  auto d = p.tb.sent.front().second;
  d[5] = 99;  // no such stream
  p.a.on_datagram(d, 0);
  CHECK(p.a.malformed() == 2);
  CHECK(p.a.sample(0, 1).rows[0].dgrams_malformed == 2);
}

TEST_CASE("metronome owner sends a second stream, muted on the audience bus") {
  Pair p(true);
  CHECK(p.b.stream_count() == 2);
  CHECK(p.a.stream_count() == 1);
  for (int k = 0; k < 100; ++k) {
    p.a.run_cycle(k * 2902);
    p.b.run_cycle(k * 2902);
    p.flush(k * 2902 + 1);
  }
  CHECK(p.a.peer_counters(2).metronome_sent == 100);
  const auto& mon = p.db.recorded(Bus::Monitor);
  const auto& aud = p.db.recorded(Bus::Audience);
  // the audience hears only peer 1's audio; the monitor adds the click
  bool differs = false;
  for (std::size_t i = 0; i < mon.size(); ++i) differs = differs || mon[i] != aud[i];
  CHECK(differs);
}

TEST_CASE("control api: status and buffer update") {
  Pair p;
  TelemetryHub hub;
  ControlApi api(p.a, hub, [] { return 12.5; });
  auto r = api.handle("GET", "/status", "");
  CHECK(r.status == 200);
  auto j = json::parse(r.body);
  CHECK(j["state"] == "running");
  CHECK(j["uptime_s"] == 12.5);
  CHECK(j["buffer"]["percentile"] == 99.0);
  CHECK(j["peers"].size() == 2);
  CHECK(j["metronome"]["available"] == false);

  r = api.handle("POST", "/buffer", R"({"percentile": 95, "max_target_frames": 1024})");
  CHECK(r.status == 200);
  CHECK(json::parse(r.body)["buffer"]["percentile"] == 95.0);
  // reaches the audio context at the next cycle
  CHECK(p.a.stream(0).buffer().config().percentile == 99.0);
  p.a.run_cycle(0);
  CHECK(p.a.stream(0).buffer().config().percentile == 95.0);
  CHECK(p.a.stream(0).buffer().config().max_target_frames == 1024);
}

TEST_CASE("control api: rejected requests change nothing") {
  Pair p;
  TelemetryHub hub;
  ControlApi api(p.a, hub, nullptr);
  const auto before = api.status();
  auto code = [&](const std::string& method, const std::string& path, const std::string& body) {
    const auto r = api.handle(method, path, body);
    const auto j = json::parse(r.body);
    return std::make_pair(r.status, j.contains("error") ? j["error"]["code"].get<std::string>() : std::string());
  };
  CHECK(code("POST", "/buffer", R"({"percentile": 120})") == std::make_pair(400, std::string("out_of_range")));
  CHECK(code("POST", "/buffer", R"({"percentile": "high"})") == std::make_pair(400, std::string("invalid_type")));
  CHECK(code("POST", "/buffer", R"({"min_target_frames": 4000})") == std::make_pair(400, std::string("out_of_range")));
  CHECK(code("POST", "/buffer", R"({"colour": 1})") == std::make_pair(400, std::string("unknown_field")));
  CHECK(code("POST", "/buffer", "{}") == std::make_pair(400, std::string("empty_update")));
  CHECK(code("POST", "/buffer", "{") == std::make_pair(400, std::string("invalid_json")));
  CHECK(code("POST", "/metronome", R"({"bpm": 100})") == std::make_pair(409, std::string("metronome_unavailable")));
  CHECK(code("POST", "/routing", R"({"source": "peer:7", "bus": "monitor", "gain": 1})") ==
        std::make_pair(400, std::string("unknown_source")));
  CHECK(code("POST", "/routing", R"({"source": "metronome", "bus": "audience", "gain": 1})") ==
        std::make_pair(400, std::string("metronome_muted")));
  CHECK(code("POST", "/routing", R"({"source": "local", "bus": "stage", "gain": 1})") ==
        std::make_pair(400, std::string("unknown_bus")));
  CHECK(code("GET", "/buffer", "").first == 405);
  CHECK(code("GET", "/nowhere", "").first == 404);
  CHECK(code("GET", "/telemetry/latest", "") == std::make_pair(404, std::string("no_sample")));
  auto after = api.status();
  CHECK(after == before);
}

TEST_CASE("control api: routing, metronome and stop") {
  Pair p(true);
  TelemetryHub hub;
  ControlApi api(p.b, hub, nullptr);
  auto r = api.handle("POST", "/routing", R"({"source": "local", "bus": "monitor", "gain": 0.5})");
  CHECK(r.status == 200);
  p.b.run_cycle(0);
  CHECK(p.b.active_routing().gain(SourceId::local(), Bus::Monitor) == 0.5F);
  r = api.handle("POST", "/metronome", R"({"bpm": 90, "enabled": false})");
  CHECK(r.status == 200);
  CHECK(json::parse(r.body)["metronome"]["bpm"] == 90);
  CHECK(api.handle("POST", "/metronome", R"({"bpm": 10})").status == 400);
  hub.publish(p.b.sample(0, 1.0));
  r = api.handle("GET", "/telemetry/latest", "");
  CHECK(r.status == 200);
  CHECK(json::parse(r.body)["streams"].size() == 2);
  CHECK(api.handle("POST", "/session/stop", "").status == 200);
  CHECK(p.b.stopped());
  CHECK(api.handle("POST", "/buffer", R"({"percentile": 90})").status == 409);
}

TEST_CASE("sse event framing") {
  TelemetrySample s;
  s.index = 7;
  s.t_s = 7;
  const auto e = sse_event(s);
  CHECK(e.rfind("event: sample\nid: 7\ndata: {", 0) == 0);
  CHECK(e.substr(e.size() - 2) == "\n\n");
}
