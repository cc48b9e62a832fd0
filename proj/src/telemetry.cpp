#include "mevo/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "mevo/csv.hpp"
#include "mevo/errors.hpp"

namespace mevo {
namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& text, const char* column, std::size_t row) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw AnalysisError("row " + std::to_string(row) + ": bad " + column + " '" + text + "'");
  }
  return value;
}

double parse_double(const std::string& text, const char* column, std::size_t row) {
  // from_chars for double is missing on older libstdc++
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw AnalysisError("row " + std::to_string(row) + ": bad " + column + " '" + text + "'");
}

}  // namespace

std::string telemetry_comment(std::uint32_t sample_rate, std::uint32_t local_peer) {
  return "# " + std::string(kTelemetrySchema) + " sample_rate=" + std::to_string(sample_rate) +
         " peer=" + std::to_string(local_peer);
}

std::string format_row(const TelemetryRow& r) {
  std::string out = fixed3(r.t_s);
  out += ',' + std::to_string(r.peer_id) + ',' + std::to_string(r.stream_id) + ',';
  if (r.rtt_ms) out += fixed3(*r.rtt_ms);
  out += ',' + fixed3(r.buffer_target_ms) + ',' + fixed3(r.buffer_occupancy_ms);
  for (const auto v : {r.frames_played, r.frames_lost, r.frames_late, r.frames_concealed, r.frames_skipped,
                       r.dgrams_sent, r.dgrams_recv, r.dgrams_malformed}) {
    out += ',' + std::to_string(v);
  }
  return out;
}

TelemetryWriter::TelemetryWriter(const std::filesystem::path& path, std::uint32_t sample_rate,
                                 std::uint32_t local_peer) {
  out_.open(path, std::ios::out | std::ios::trunc);
  if (!out_) {
    error_ = "cannot open telemetry log " + path.string();
    return;
  }
  out_ << telemetry_comment(sample_rate, local_peer) << '\n' << kTelemetryColumns << '\n';
  out_.flush();
  file_ok_ = static_cast<bool>(out_);
  if (!file_ok_) error_ = "cannot write telemetry log " + path.string();
}

void TelemetryWriter::append(const TelemetrySample& sample) {
  if (file_ok_) {
    for (const auto& row : sample.rows) out_ << format_row(row) << '\n';
    out_.flush();
    if (out_) {
      ++written_;
      return;
    }
    file_ok_ = false;
    error_ = "telemetry log write failed";
  }
  ring_.push_back(sample);
  if (ring_.size() > kTelemetryRingCapacity) ring_.pop_front();
}

void TelemetryHub::publish(TelemetrySample sample) {
  {
    std::lock_guard lock(mu_);
    latest_ = std::move(sample);
  }
  cv_.notify_all();
}

std::optional<TelemetrySample> TelemetryHub::latest() const {
  std::lock_guard lock(mu_);
  return latest_;
}

std::optional<TelemetrySample> TelemetryHub::wait_newer(std::uint64_t after_index, int timeout_ms) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms),
               [&] { return closed_ || (latest_ && latest_->index > after_index); });
  if (latest_ && latest_->index > after_index) return latest_;
  return std::nullopt;
}

void TelemetryHub::set_error(std::string error) {
  std::lock_guard lock(mu_);
  error_ = std::move(error);
}

std::string TelemetryHub::error() const {
  std::lock_guard lock(mu_);
  return error_;
}

void TelemetryHub::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool TelemetryHub::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

TelemetryLog parse_telemetry(const std::string& text) {
  const auto table = csv::read_string(text);
  TelemetryLog log;
  for (const auto& c : table.comments) {
    std::istringstream in(c);
    std::string word;
    while (in >> word) {
      if (word.rfind("sample_rate=", 0) == 0) {
        log.sample_rate = parse_number<std::uint32_t>(word.substr(12), "sample_rate", 0);
        if (log.sample_rate == 0) throw AnalysisError("sample_rate must be positive");
      } else if (word.rfind("peer=", 0) == 0) {
        log.local_peer = parse_number<std::uint32_t>(word.substr(5), "peer", 0);
      }
    }
  }
  const char* names[] = {"t_s", "peer_id", "stream_id", "rtt_ms", "buffer_target_ms",
                         "buffer_occupancy_ms", "frames_played", "frames_lost", "frames_late",
                         "frames_concealed", "frames_skipped", "dgrams_sent", "dgrams_recv",
                         "dgrams_malformed"};
  std::size_t idx[14];
  for (int i = 0; i < 14; ++i) idx[i] = table.column(names[i]);
  std::size_t n = 0;
  for (const auto& f : table.rows) {
    ++n;
    TelemetryRow r;
    r.t_s = parse_double(f[idx[0]], names[0], n);
    r.peer_id = parse_number<std::uint32_t>(f[idx[1]], names[1], n);
    r.stream_id = parse_number<std::uint32_t>(f[idx[2]], names[2], n);
    if (!f[idx[3]].empty()) r.rtt_ms = parse_double(f[idx[3]], names[3], n);
    r.buffer_target_ms = parse_double(f[idx[4]], names[4], n);
    r.buffer_occupancy_ms = parse_double(f[idx[5]], names[5], n);
    std::uint64_t* counters[] = {&r.frames_played, &r.frames_lost, &r.frames_late, &r.frames_concealed,
                                 &r.frames_skipped, &r.dgrams_sent, &r.dgrams_recv, &r.dgrams_malformed};
    for (int i = 0; i < 8; ++i) *counters[i] = parse_number<std::uint64_t>(f[idx[6 + i]], names[6 + i], n);
    log.rows.push_back(r);
  }
  return log;
}

TelemetryLog load_telemetry(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AnalysisError("cannot open telemetry log " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_telemetry(buf.str());
}

std::vector<StreamKey> stream_keys(const TelemetryLog& log) {
  std::vector<StreamKey> keys;
  for (const auto& r : log.rows) {
    const StreamKey k{r.peer_id, r.stream_id};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  return keys;
}

std::vector<TelemetryRow> stream_rows(const TelemetryLog& log, StreamKey key) {
  std::vector<TelemetryRow> out;
  for (const auto& r : log.rows) {
    if (r.peer_id == key.peer_id && r.stream_id == key.stream_id) out.push_back(r);
  }
  return out;
}

double empirical_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw AnalysisError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

double loss_ratio(const std::vector<TelemetryRow>& rows, std::uint32_t sample_rate) {
  if (rows.empty()) throw AnalysisError("loss ratio of an empty log");
  const double duration = rows.back().t_s;
  if (!(duration > 0)) throw AnalysisError("loss ratio needs a positive duration");
  return static_cast<double>(rows.back().frames_lost) / (duration * sample_rate);
}

StreamSummary summarize_stream(const std::vector<TelemetryRow>& rows, std::uint32_t sample_rate,
                               double rtt_threshold_ms) {
  if (rows.empty()) throw AnalysisError("summary of an empty log");
  StreamSummary s;
  s.key = {rows.front().peer_id, rows.front().stream_id};
  s.rows = rows.size();
  s.duration_s = rows.back().t_s;
  s.rtt_threshold_ms = rtt_threshold_ms;

  std::vector<double> rtts;
  std::vector<double> occupancy;
  double target_sum = 0;
  for (const auto& r : rows) {
    if (r.rtt_ms) rtts.push_back(*r.rtt_ms);
    occupancy.push_back(r.buffer_occupancy_ms);
    target_sum += r.buffer_target_ms;
  }
  s.rtt_samples = rtts.size();
  if (!rtts.empty()) {
    const auto [lo, hi] = std::minmax_element(rtts.begin(), rtts.end());
    s.rtt_min_ms = *lo;
    s.rtt_max_ms = *hi;
    s.rtt_p50_ms = empirical_percentile(rtts, 50);
    s.rtt_p99_ms = empirical_percentile(rtts, 99);
    const auto below = std::count_if(rtts.begin(), rtts.end(), [&](double v) { return v < rtt_threshold_ms; });
    s.rtt_fraction_below = static_cast<double>(below) / static_cast<double>(rtts.size());
  }
  s.frames_lost = rows.back().frames_lost;
  s.frames_late = rows.back().frames_late;
  if (s.duration_s > 0) s.loss_ratio = loss_ratio(rows, sample_rate);
  s.lost_audio_s = static_cast<double>(s.frames_lost) / sample_rate;
  s.buffer_mean_ms = std::accumulate(occupancy.begin(), occupancy.end(), 0.0) / static_cast<double>(occupancy.size());
  s.buffer_p2_5_ms = empirical_percentile(occupancy, 2.5);
  s.buffer_p97_5_ms = empirical_percentile(occupancy, 97.5);
  s.target_mean_ms = target_sum / static_cast<double>(rows.size());
  return s;
}

std::vector<StreamSummary> summarize(const TelemetryLog& log, double rtt_threshold_ms) {
  if (log.rows.empty()) throw AnalysisError("summary of an empty log");
  std::vector<StreamSummary> out;
  for (const auto& key : stream_keys(log)) {
    out.push_back(summarize_stream(stream_rows(log, key), log.sample_rate, rtt_threshold_ms));
  }
  return out;
}

}  // namespace mevo
