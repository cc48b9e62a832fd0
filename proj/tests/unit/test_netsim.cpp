#include "doctest.h"
#include "mevo/csv.hpp"
#include "mevo/errors.hpp"
#include "mevo/netsim.hpp"

using namespace mevo;

namespace {

Scenario small(double loss, double jitter_ms, double drift_ppm, double seconds, std::uint64_t seed = 7) {
  LinkModel link;
  link.base_owd_ms = 15;
  link.loss_prob = loss;
  link.jitter = JitterModel::uniform(0, jitter_ms);
  auto s = mesh_scenario(2, link, seconds, seed);
  s.peers[0].clock.drift_ppm = drift_ppm;
  s.peers[1].clock.drift_ppm = -drift_ppm;
  return s;
}

}  // namespace

TEST_CASE("clock model conversions") {
  StreamConfig sc;
  ClockModel ideal;
  CHECK(cycle_time_ns(0, sc, ideal) == 0);
  CHECK(cycle_time_ns(1, sc, ideal) == 2'902'494);      // 128 / 44100 s
  CHECK(cycle_time_ns(44100, sc, ideal) == 128'000'000'000);
  ClockModel fast{100, 0};
  // a fast clock reaches each cycle earlier in true time
  CHECK(cycle_time_ns(44100, sc, fast) == std::llround(128e9 / 1.0001));
  CHECK(local_us(1'000'000'000, fast) == 1'000'100);
  ClockModel shifted{0, -500};
  CHECK(local_us(1'000'000, shifted) == 500);
  CHECK(local_us(local_to_true_ns(3.0, fast), fast) == 3'000'000);
}

TEST_CASE("simulation is deterministic") {
  const auto s = small(0.01, 5, 50, 20);
  const auto a = run(s);
  const auto b = run(s);
  CHECK(a.peer(1).telemetry_csv == b.peer(1).telemetry_csv);
  CHECK(a.peer(2).telemetry_csv == b.peer(2).telemetry_csv);
  CHECK(a.ground_truth_csv == b.ground_truth_csv);
  CHECK(a.events == b.events);
  const auto c = run(small(0.01, 5, 50, 20, 8));
  CHECK(a.peer(1).telemetry_csv != c.peer(1).telemetry_csv);
}

TEST_CASE("one telemetry row per stream per second of the peer clock") {
  const auto r = run(small(0, 1, 200, 30));
  for (PeerId id : {1u, 2u}) {
    const auto t = csv::read_string(r.peer(id).telemetry_csv);
    REQUIRE(t.rows.size() == 30);
    for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(std::stod(t.rows[i][0]) == static_cast<double>(i + 1));
    CHECK(r.peer(id).samples == 30);
    REQUIRE(t.comments.size() == 1);
    CHECK(t.comments[0].find("sample_rate=44100") != std::string::npos);
  }
}

TEST_CASE("every sent frame is accounted for") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = run(small(0.02, 15, 200, 30, seed));
    for (const auto& st : r.streams) {
      INFO("seed " << seed << " stream " << st.src << "->" << st.dst);
      CHECK(st.conserved());
      CHECK(st.telemetry_consistent());
      CHECK(st.slots_sent == st.slots_played + st.slots_lost + st.slots_late + st.slots_skipped + st.slots_in_flight);
      CHECK(st.dgrams_sent >= st.slots_sent);
      CHECK(st.dgrams_dropped > 0);
    }
  }
}

TEST_CASE("scripted drop shows up as one lost packet") {
  SimHooks hooks;
  hooks.drop = [](PeerId src, PeerId, std::span<const std::uint8_t> d) {
    // audio datagram with seq 100 from peer 1
    return src == 1 && (d[4] & 0x03) == 0 && d[6] == 0 && d[7] == 100;
  };
  const auto r = run(small(0, 0, 0, 5), hooks);
  const auto& st = r.stream(1, 2);
  CHECK(st.dgrams_dropped == 1);
  CHECK(st.slots_lost == 1);
  CHECK(st.conserved());
  CHECK(r.stream(2, 1).slots_lost == 0);
}

TEST_CASE("full ground truth has one row per datagram") {
  auto s = small(0.05, 3, 0, 5);
  const auto r = run(s);
  const auto t = csv::read_string(r.ground_truth_csv);
  std::uint64_t sent = 0;
  for (const auto& st : r.streams) sent += st.dgrams_sent;
  std::uint64_t audio = 0;
  std::uint64_t probes = 0;
  for (const auto& row : t.rows) {
    const auto& kind = row[t.column("kind")];
    audio += kind == "audio" ? 1 : 0;
    probes += kind == "ping" || kind == "pong" ? 1 : 0;
  }
  CHECK(audio == sent);
  CHECK(audio + probes == t.rows.size());
  s.full_ground_truth = false;
  CHECK(run(s).ground_truth_csv.empty());
}

TEST_CASE("invalid scenarios fail before running") {
  auto s = small(0, 0, 0, 5);
  s.links.erase({1, 2});
  CHECK_THROWS_AS(run(s), ConfigError);
}
