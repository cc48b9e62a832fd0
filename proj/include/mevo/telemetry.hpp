#pragma once

// 1 Hz session telemetry: sample rows, the CSV log, and log summaries.
//
// One sample holds a row per incoming stream. Columns (fixed order):
//   t_s,peer_id,stream_id,rtt_ms,buffer_target_ms,buffer_occupancy_ms,
//   frames_played,frames_lost,frames_late,frames_concealed,frames_skipped,
//   dgrams_sent,dgrams_recv,dgrams_malformed
// A missing RTT is an empty field. See docs/telemetry.md.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mevo {

inline constexpr std::string_view kTelemetryColumns =
    "t_s,peer_id,stream_id,rtt_ms,buffer_target_ms,buffer_occupancy_ms,frames_played,frames_lost,"
    "frames_late,frames_concealed,frames_skipped,dgrams_sent,dgrams_recv,dgrams_malformed";
inline constexpr std::string_view kTelemetrySchema = "mevo-telemetry v1";
inline constexpr std::size_t kTelemetryRingCapacity = 3600;
inline constexpr std::int64_t kProbeTimeoutUs = 3'000'000;

struct TelemetryRow {
  double t_s = 0;
  std::uint32_t peer_id = 0;  // remote peer the stream comes from
  std::uint32_t stream_id = 0;
  std::optional<double> rtt_ms;
  double buffer_target_ms = 0;
  double buffer_occupancy_ms = 0;
  std::uint64_t frames_played = 0;
  std::uint64_t frames_lost = 0;
  std::uint64_t frames_late = 0;
  std::uint64_t frames_concealed = 0;
  std::uint64_t frames_skipped = 0;
  std::uint64_t dgrams_sent = 0;       // to peer_id, every kind
  std::uint64_t dgrams_recv = 0;       // from peer_id, every kind
  std::uint64_t dgrams_malformed = 0;  // whole session

  bool operator==(const TelemetryRow&) const = default;
};

struct TelemetrySample {
  std::uint64_t index = 0;  // 1, 2, ...
  double t_s = 0;
  std::vector<TelemetryRow> rows;
};

std::string telemetry_comment(std::uint32_t sample_rate, std::uint32_t local_peer);
std::string format_row(const TelemetryRow& row);

/// Appends samples to a CSV file. When the file cannot be opened or a write
/// fails the sample is kept in a ring of the last 3600 samples and error()
/// describes the failure; later samples keep going to the ring.
class TelemetryWriter {
 public:
  TelemetryWriter() = default;  // memory only
  TelemetryWriter(const std::filesystem::path& path, std::uint32_t sample_rate, std::uint32_t local_peer);

  void append(const TelemetrySample& sample);
  const std::string& error() const { return error_; }
  const std::deque<TelemetrySample>& ring() const { return ring_; }
  std::uint64_t written() const { return written_; }

 private:
  std::ofstream out_;
  bool file_ok_ = false;
  std::string error_;
  std::deque<TelemetrySample> ring_;
  std::uint64_t written_ = 0;
};

/// Latest-sample mailbox shared by the telemetry context and the control API.
class TelemetryHub {
 public:
  void publish(TelemetrySample sample);
  std::optional<TelemetrySample> latest() const;
  /// Blocks until a sample newer than `after_index` exists or the timeout passes.
  std::optional<TelemetrySample> wait_newer(std::uint64_t after_index, int timeout_ms) const;
  void set_error(std::string error);
  std::string error() const;
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::optional<TelemetrySample> latest_;
  std::string error_;
  bool closed_ = false;
};

struct TelemetryLog {
  std::uint32_t sample_rate = 44100;
  std::optional<std::uint32_t> local_peer;
  std::vector<TelemetryRow> rows;
};

/// Throws AnalysisError on malformed input (missing columns, bad numbers).
TelemetryLog parse_telemetry(const std::string& text);
TelemetryLog load_telemetry(const std::filesystem::path& path);

struct StreamKey {
  std::uint32_t peer_id = 0;
  std::uint32_t stream_id = 0;
  auto operator<=>(const StreamKey&) const = default;
};

/// Rows of one stream, in file order.
std::vector<TelemetryRow> stream_rows(const TelemetryLog& log, StreamKey key);
std::vector<StreamKey> stream_keys(const TelemetryLog& log);

/// Empirical percentile with linear interpolation between order statistics
/// (position p/100 * (n - 1) in the sorted sample).
double empirical_percentile(std::vector<double> values, double p);

struct StreamSummary {
  StreamKey key;
  std::size_t rows = 0;
  double duration_s = 0;  // t_s of the last row
  std::size_t rtt_samples = 0;
  std::optional<double> rtt_min_ms;
  std::optional<double> rtt_max_ms;
  std::optional<double> rtt_p50_ms;
  std::optional<double> rtt_p99_ms;
  std::optional<double> rtt_fraction_below;  // strictly below the threshold
  double rtt_threshold_ms = 59.0;
  std::uint64_t frames_lost = 0;
  std::uint64_t frames_late = 0;
  double loss_ratio = 0;
  double lost_audio_s = 0;
  double buffer_mean_ms = 0;
  double buffer_p2_5_ms = 0;
  double buffer_p97_5_ms = 0;
  double target_mean_ms = 0;
};

/// frames_lost of the last row / (t_s of the last row * sample_rate).
/// Throws AnalysisError on empty input or zero duration.
double loss_ratio(const std::vector<TelemetryRow>& rows, std::uint32_t sample_rate);

StreamSummary summarize_stream(const std::vector<TelemetryRow>& rows, std::uint32_t sample_rate,
                               double rtt_threshold_ms = 59.0);
/// One summary per stream. Throws AnalysisError on an empty log.
std::vector<StreamSummary> summarize(const TelemetryLog& log, double rtt_threshold_ms = 59.0);

}  // namespace mevo
