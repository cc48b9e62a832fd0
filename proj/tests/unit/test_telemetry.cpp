#include <fstream>

#include "doctest.h"
#include "mevo/analysis.hpp"
#include "mevo/csv.hpp"
#include "mevo/errors.hpp"
#include "mevo/telemetry.hpp"

using namespace mevo;

namespace {

TelemetryRow row(double t, std::optional<double> rtt, double occ, std::uint64_t lost) {
  TelemetryRow r;
  r.t_s = t;
  r.peer_id = 2;
  r.stream_id = 2;
  r.rtt_ms = rtt;
  r.buffer_target_ms = 10;
  r.buffer_occupancy_ms = occ;
  r.frames_lost = lost;
  r.frames_concealed = lost;
  return r;
}

std::string log_text(const std::vector<TelemetryRow>& rows) {
  std::string s = telemetry_comment(44100, 1) + "\n" + std::string(kTelemetryColumns) + "\n";
  for (const auto& r : rows) s += format_row(r) + "\n";
  return s;
}

}  // namespace

TEST_CASE("csv quoting round trips") {
  const csv::Row fields{"plain", "with,comma", "with \"quote\"", "", "line\nbreak"};
  const auto t = csv::read_string("h1,h2,h3,h4,h5\n" + csv::join(fields) + "\n");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0] == fields);
  CHECK(t.column("h3") == 2);
  CHECK_THROWS(t.column("zz"));
}

TEST_CASE("telemetry rows format with three decimals and an empty rtt") {
  auto r = row(1, std::nullopt, 12.3456, 5);
  CHECK(format_row(r) == "1.000,2,2,,10.000,12.346,0,5,0,5,0,0,0,0");
  r.rtt_ms = 52.25;
  CHECK(format_row(r).rfind("1.000,2,2,52.250,", 0) == 0);
}

TEST_CASE("telemetry log parse round trip") {
  std::vector<TelemetryRow> rows;
  for (int t = 1; t <= 5; ++t) rows.push_back(row(t, t % 2 ? std::optional<double>(50 + t) : std::nullopt, 3, 0));
  const auto log = parse_telemetry(log_text(rows));
  CHECK(log.sample_rate == 44100);
  CHECK(log.local_peer == 1u);
  REQUIRE(log.rows.size() == 5);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(log.rows[i] == rows[i]);
  CHECK_THROWS_AS(parse_telemetry("t_s,peer_id\n1,2\n"), AnalysisError);
  CHECK_THROWS_AS(parse_telemetry(log_text(rows) + "6.000,2,2,,x,0,0,0,0,0,0,0,0,0\n"), AnalysisError);
}

TEST_CASE("loss ratio: 4410 frames lost over 100 s") {
  std::vector<TelemetryRow> rows;
  for (int t = 1; t <= 100; ++t) rows.push_back(row(t, 52.0, 10, static_cast<std::uint64_t>(t) * 44));
  rows.back().frames_lost = 4410;
  CHECK(loss_ratio(rows, 44100) == doctest::Approx(0.001));
  const auto s = summarize_stream(rows, 44100);
  CHECK(s.lost_audio_s == doctest::Approx(0.1));
  const auto log = parse_telemetry(log_text(rows));
  CHECK(loss_ratio(log, {2, 2}) == doctest::Approx(0.001));
}

TEST_CASE("empirical percentile interpolates between order statistics") {
  CHECK(empirical_percentile({1, 2, 3, 4, 5}, 50) == 3);
  CHECK(empirical_percentile({1, 2, 3, 4, 5}, 2.5) == doctest::Approx(1.1));
  CHECK(empirical_percentile({5, 4, 3, 2, 1}, 97.5) == doctest::Approx(4.9));
  CHECK(empirical_percentile({7}, 99) == 7);
}

TEST_CASE("rtt histogram bins and threshold") {
  const std::vector<double> v{52.0, 52.2, 52.6, 53.1, 59.0, 60.4};
  const auto h = rtt_histogram(v, 0.5, 59.0);
  CHECK(h.min_edge_ms == 52.0);
  CHECK(h.samples == 6);
  REQUIRE(h.counts.size() == 17);  // [52, 60.5)
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[2] == 1);
  CHECK(h.counts[14] == 1);
  CHECK(h.counts[16] == 1);
  CHECK(h.fraction_below == doctest::Approx(4.0 / 6.0));  // 59.0 itself is not below
  CHECK_THROWS_AS(rtt_histogram(std::vector<double>{}, 0.5), AnalysisError);
  CHECK_THROWS_AS(rtt_histogram(v, 0), AnalysisError);
}

TEST_CASE("rtt values skip repeats of the same peer and second") {
  auto a = row(1, 52.0, 1, 0);
  auto b = a;
  b.stream_id = 255;  // metronome stream from the same peer
  auto c = row(2, 53.0, 1, 0);
  CHECK(rtt_values({a, b, c}) == std::vector<double>{52.0, 53.0});
}

TEST_CASE("m2e budget: 5 ms driver + 20 ms network + 10 ms buffer") {
  std::vector<TelemetryRow> rows;
  for (int t = 1; t <= 40; ++t) rows.push_back(row(t, 40.0 + t, 10, 0));
  const auto b = m2e_budget(rows, 5.0);
  CHECK(b.network_ms == doctest::Approx(20.5));  // min rtt 41 ms
  rows.clear();
  for (int t = 1; t <= 40; ++t) rows.push_back(row(t, 40.0, 10, 0));
  const auto c = m2e_budget(rows, 5.0);
  CHECK(c.total_point_ms() == doctest::Approx(35));
  CHECK(c.total_low_ms() == doctest::Approx(35));
  CHECK(c.total_high_ms() == doctest::Approx(35));
  const auto env = pooled_envelope({b, c});
  CHECK(env.low_ms == doctest::Approx(35));
  CHECK(env.high_ms == doctest::Approx(35.5));
  CHECK_THROWS_AS(m2e_budget({}, 5), AnalysisError);
  CHECK_THROWS_AS(m2e_budget(rows, -1), AnalysisError);
}

TEST_CASE("cumulative loss is per stream and non-decreasing") {
  std::vector<TelemetryRow> rows{row(1, {}, 1, 0), row(2, {}, 1, 128), row(3, {}, 1, 128), row(4, {}, 1, 512)};
  const auto c = cumulative_loss(rows);
  REQUIRE(c.size() == 4);
  CHECK(c[3].frames_lost == 512);
  const std::vector<NamedLog> logs{{"x", parse_telemetry(log_text(rows))}};
  const auto csv_text = cumulative_loss_csv(logs);
  CHECK(csv_text.find("512") != std::string::npos);
  const auto dat = cumulative_loss_dat(logs);
  CHECK(dat.find("# x") != std::string::npos);
}

TEST_CASE("telemetry writer: file log, bounded ring without one") {
  auto sample = [](std::uint64_t i) {
    TelemetrySample s;
    s.index = i;
    s.t_s = static_cast<double>(i);
    s.rows = {row(s.t_s, 52.0, 3, 0)};
    return s;
  };
  const auto path = std::filesystem::temp_directory_path() / "mevo_unit_telemetry.csv";
  {
    TelemetryWriter w(path, 44100, 1);
    CHECK(w.error().empty());
    for (std::uint64_t i = 1; i <= 50; ++i) w.append(sample(i));
    CHECK(w.written() == 50);
  }
  CHECK(load_telemetry(path).rows.size() == 50);
  std::filesystem::remove(path);

  TelemetryWriter memory;
  for (std::uint64_t i = 1; i <= kTelemetryRingCapacity + 10; ++i) memory.append(sample(i));
  CHECK(memory.ring().size() == kTelemetryRingCapacity);
  CHECK(memory.ring().front().index == 11);

  TelemetryWriter bad("/nonexistent/dir/x.csv", 44100, 1);
  CHECK_FALSE(bad.error().empty());
  bad.append(sample(1));
  CHECK(bad.ring().size() == 1);
}

TEST_CASE("telemetry hub wakes waiters on publish") {
  TelemetryHub hub;
  CHECK_FALSE(hub.latest());
  CHECK_FALSE(hub.wait_newer(0, 10));
  TelemetrySample s;
  s.index = 3;
  hub.publish(s);
  CHECK(hub.wait_newer(2, 10)->index == 3);
  CHECK_FALSE(hub.wait_newer(3, 10));
  hub.close();
  CHECK(hub.closed());
}
