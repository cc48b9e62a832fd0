#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mevo/errors.hpp"
#include "mevo/link_model.hpp"
#include "mevo/rng.hpp"
#include "mevo/scenario.hpp"
#include "mevo/session_config.hpp"

using namespace mevo;

namespace {

const char* const kSession = R"ini(
[session]
local_peer_id = 1
control_port = 8080

[stream]
sample_rate = 48000
channels = 2
frames_per_packet = 64

[jitter]
percentile = 95
max_target_frames = 1024

[metronome]
enabled = true
bpm = 96
owner_peer_id = 1

[peer:1]
host = 10.0.0.1
port = 5000
site = Turin

[peer:2]
host = 10.0.0.2
port = 5000
stream_id = 7

[routing]
local = 0.5 0
peer:2 = 1 0.25
)ini";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("session config parses every section") {
  const auto c = parse_session_config(kSession);
  CHECK(c.local_peer_id == 1);
  CHECK(c.control_port == 8080);
  CHECK(c.stream.sample_rate == 48000);
  CHECK(c.stream.channels == 2);
  CHECK(c.stream.frames_per_packet == 64);
  CHECK(c.jitter.percentile == 95);
  CHECK(c.jitter.max_target_frames == 1024);
  CHECK(c.jitter.min_target_frames == 128);
  CHECK(c.metronome.enabled);
  CHECK(c.metronome.bpm == 96);
  REQUIRE(c.peers.size() == 2);
  CHECK(c.local().site == "Turin");
  CHECK(c.find_peer(2)->stream_id == 7);
  CHECK(c.remote_peers().size() == 1);
  const auto r = build_routing(c);
  CHECK(r.gain(SourceId::local(), Bus::Monitor) == 0.5F);
  CHECK(r.gain(SourceId::remote(2), Bus::Audience) == 0.25F);
  CHECK(r.gain(SourceId::metronome(), Bus::Monitor) == 1.0F);
  CHECK(r.gain(SourceId::metronome(), Bus::Audience) == 0.0F);
}

TEST_CASE("session config survives format and parse") {
  const auto c = parse_session_config(kSession);
  const auto again = parse_session_config(format_session_config(c));
  CHECK(again.stream == c.stream);
  CHECK(again.jitter == c.jitter);
  CHECK(again.metronome == c.metronome);
  CHECK(again.peers == c.peers);
  CHECK(build_routing(again).gains() == build_routing(c).gains());
}

TEST_CASE("session config rejects inconsistent input") {
  auto with = [](const std::string& from, const std::string& to) {
    std::string s = kSession;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  CHECK_THROWS_AS(parse_session_config(with("local_peer_id = 1", "local_peer_id = 3")), ConfigError);
  CHECK_THROWS_AS(parse_session_config(with("stream_id = 7", "stream_id = 1")), ConfigError);
  CHECK_THROWS_AS(parse_session_config(with("bpm = 96", "bpm = 400")), ConfigError);
  CHECK_THROWS_AS(parse_session_config(with("channels = 2", "channels = 0")), ConfigError);
  CHECK_THROWS_AS(parse_session_config(with("percentile = 95", "percentile = 40")), ConfigError);
  CHECK_THROWS_AS(parse_session_config(with("peer:2 = 1 0.25", "peer:9 = 1 0.25")), ConfigError);
  CHECK_THROWS_AS(parse_session_config(with("peer:2 = 1 0.25", "peer:2 = 1")), ConfigError);
  CHECK_THROWS_AS(parse_session_config(with("sample_rate = 48000", "sample_rate = fast")), ConfigError);
  CHECK_THROWS_AS(parse_session_config("[session\n"), ConfigError);
  CHECK_THROWS_AS(load_session_config("/nonexistent/mevo.ini"), ConfigError);
}

TEST_CASE("example configs load") {
  for (const auto& e : std::filesystem::directory_iterator(MEVO_SOURCE_DIR "/configs")) {
    if (e.path().extension() != ".ini") continue;
    INFO(e.path());
    CHECK_NOTHROW(load_session_config(e.path()));
  }
}

TEST_CASE("jitter model syntax") {
  CHECK(parse_jitter("none") == JitterModel::none());
  CHECK(parse_jitter("uniform 1 3") == JitterModel::uniform(1, 3));
  CHECK(parse_jitter("shifted_exponential 0.5 2") == JitterModel::shifted_exponential(0.5, 2));
  CHECK(parse_jitter(to_string(JitterModel::uniform(0.25, 4))) == JitterModel::uniform(0.25, 4));
  CHECK_THROWS_AS(parse_jitter("gaussian 1 2"), ConfigError);
  CHECK_THROWS_AS(parse_jitter("uniform 1"), ConfigError);
  CHECK_THROWS_AS(parse_jitter("uniform 1 2 3"), ConfigError);
}

TEST_CASE("link: lossless jitter-free link is a constant delay") {
  LinkModel m;
  m.base_owd_ms = 12.5;
  std::vector<std::int64_t> sends;
  for (std::int64_t i = 0; i < 1000; ++i) sends.push_back(i * 2'902'494);
  const auto d = deliveries(m, sends);
  for (std::size_t i = 0; i < sends.size(); ++i) {
    REQUIRE(d[i]);
    CHECK(*d[i] == sends[i] + 12'500'000);
  }
}

TEST_CASE("link: loss pattern does not depend on the jitter model") {
  LinkModel a;
  a.loss_prob = 0.1;
  a.seed = 77;
  LinkModel b = a;
  b.jitter = JitterModel::shifted_exponential(1, 5);
  b.congestion = {60, 5, 10, 2, 20};
  std::vector<std::int64_t> sends;
  for (std::int64_t i = 0; i < 20000; ++i) sends.push_back(i * 1'000'000);
  const auto da = deliveries(a, sends);
  const auto db = deliveries(b, sends);
  std::size_t lost = 0;
  for (std::size_t i = 0; i < sends.size(); ++i) {
    REQUIRE(da[i].has_value() == db[i].has_value());
    lost += da[i] ? 0 : 1;
  }
  CHECK(lost == doctest::Approx(2000).epsilon(0.1));
}

TEST_CASE("link: deliveries stay in send order unless reordering is enabled") {
  LinkModel m;
  m.jitter = JitterModel::uniform(0, 20);
  m.seed = 3;
  std::vector<std::int64_t> sends;
  for (std::int64_t i = 0; i < 5000; ++i) sends.push_back(i * 1'000'000);
  const auto fifo = deliveries(m, sends);
  for (std::size_t i = 1; i < sends.size(); ++i) CHECK(*fifo[i] >= *fifo[i - 1]);
  m.reorder = true;
  const auto free = deliveries(m, sends);
  std::size_t inversions = 0;
  for (std::size_t i = 1; i < sends.size(); ++i) inversions += *free[i] < *free[i - 1] ? 1 : 0;
  CHECK(inversions > 100);
  LinkChannel ch(m);
  ch.deliver(10);
  CHECK_THROWS_AS(ch.deliver(5), ConfigError);
}

TEST_CASE("link: shifted exponential jitter has the configured mean") {
  LinkModel m;
  m.jitter = JitterModel::shifted_exponential(2, 3);
  m.reorder = true;
  m.seed = 9;
  std::vector<std::int64_t> sends(100000, 0);
  for (std::size_t i = 0; i < sends.size(); ++i) sends[i] = static_cast<std::int64_t>(i) * 1000;
  double sum = 0;
  double lowest = 1e9;
  const auto d = deliveries(m, sends);
  for (std::size_t i = 0; i < sends.size(); ++i) {
    const double ms = static_cast<double>(*d[i] - sends[i]) / 1e6;
    sum += ms;
    lowest = std::min(lowest, ms);
  }
  CHECK(sum / static_cast<double>(sends.size()) == doctest::Approx(5).epsilon(0.02));
  CHECK(lowest >= 2.0);
}

TEST_CASE("link: congestion episode shape") {
  LinkModel m;
  m.congestion = {3600, 10, 10, 2, 20};  // one per second on average, peak exactly 10 ms
  m.seed = 4;
  LinkChannel ch(m);
  double peak = 0;
  std::size_t raised = 0;
  for (std::int64_t t = 0; t < 60'000'000'000; t += 100'000) {
    const double e = ch.congestion_extra_ms(t);
    peak = std::max(peak, e);
    raised += e > 0 ? 1 : 0;
  }
  CHECK(peak == doctest::Approx(10));
  // expected fraction of time inside an episode: 1 - exp(-rate * length)
  const double frac = static_cast<double>(raised) / 600'000.0;
  CHECK(frac == doctest::Approx(1 - std::exp(-0.024)).epsilon(0.25));
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(derive_seed(1, "x"));
  Rng b(derive_seed(1, "x"));
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
  CHECK(derive_seed(1, "link", 1, 2) != derive_seed(1, "link", 2, 1));
  Rng r(5);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) sum += r.exponential(2.0);
  CHECK(sum / 100000 == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("scenario parsing") {
  const auto s = parse_scenario(R"ini(
[scenario]
name = pair
duration_s = 30
seed = 42

[stream]
frames_per_packet = 128

[jitter]
percentile = 99

[peer:1]
drift_ppm = 20
source = noise:1
percentile = 95

[peer:2]
offset_us = -5000
source = sine:220

[link:default]
base_owd_ms = 10
jitter = uniform 0 2

[link:2->1]
loss_prob = 0.01
)ini");
  CHECK(s.name == "pair");
  CHECK(s.duration_s == 30);
  REQUIRE(s.peers.size() == 2);
  CHECK(s.peers[0].clock.drift_ppm == 20);
  CHECK(s.peers[0].session.jitter.percentile == 95);
  CHECK(s.peers[1].session.jitter.percentile == 99);
  CHECK(s.peers[1].clock.offset_us == -5000);
  CHECK(s.link(1, 2).loss_prob == 0);
  CHECK(s.link(2, 1).loss_prob == 0.01);
  CHECK(s.link(2, 1).base_owd_ms == 10);
  CHECK(s.link(2, 1).jitter == JitterModel::uniform(0, 2));
  CHECK(s.link_seed(1, 2) != s.link_seed(2, 1));
  CHECK_THROWS_AS(parse_scenario("[scenario]\nduration_s = 5\n[peer:1]\n"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("[peer:1]\n[peer:2]\n[link:1-2]\n"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("[peer:1]\n[peer:2]\n[link:1->3]\n"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("[peer:1]\ndrift_ppm = 5000\n[peer:2]\n"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("[scenario]\nduration_s = long\n[peer:1]\n[peer:2]\n"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("[scenario]\nground_truth = some\n[peer:1]\n[peer:2]\n"), ConfigError);
}

TEST_CASE("replication scenario file matches the built-in copy") {
  CHECK(slurp(MEVO_SOURCE_DIR "/scenarios/replication.ini") == std::string(kReplicationScenario));
  const auto s = replication_scenario();
  CHECK(s.peers.size() == 2);
  CHECK(s.duration_s == 9900);
}

TEST_CASE("bundled scenarios load") {
  for (const auto& e : std::filesystem::directory_iterator(MEVO_SOURCE_DIR "/scenarios")) {
    if (e.path().extension() != ".ini") continue;
    INFO(e.path());
    CHECK_NOTHROW(load_scenario(e.path()));
  }
}
